use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::slide::{load_slide, Label, SlideRecord};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "slide_id,path,label,center_id";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub slide_id: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub label: Label,
    pub center_id: String,
}

/// Dataset listing. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut ids = HashSet::new();
        for e in &entries {
            if !ids.insert(e.slide_id.as_str()) {
                return Err(Error::Malformed(format!("duplicate slide id {}", e.slide_id)));
            }
            for field in [&e.slide_id, &e.center_id] {
                if field.contains([',', '\n', '\r']) || field.is_empty() {
                    return Err(Error::Malformed(format!("unusable manifest field {field:?}")));
                }
            }
        }
        Ok(Self { entries, base_dir: base_dir.into() })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn labels(&self) -> Vec<Label> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn centers(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.center_id.clone()).collect()
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == MANIFEST_HEADER => {}
            other => {
                return Err(Error::Malformed(format!(
                    "manifest header must be '{MANIFEST_HEADER}', found {other:?}"
                )))
            }
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Malformed(format!("manifest row {}: expected 4 fields", i + 1)));
            }
            let label = match fields[2] {
                "0" => Label::Normal,
                "1" => Label::Tumor,
                other => {
                    return Err(Error::Malformed(format!("manifest row {}: label {other:?}", i + 1)))
                }
            };
            entries.push(ManifestEntry {
                slide_id: fields[0].to_string(),
                path: PathBuf::from(fields[1]),
                label,
                center_id: fields[3].to_string(),
            });
        }
        Self::new(entries, base_dir)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.slide_id,
                e.path.display(),
                e.label.as_u8(),
                e.center_id
            ));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Loads every slide, checking files against their manifest rows and
    /// that all slides share one feature dimension.
    pub fn load_slides(&self) -> Result<Vec<SlideRecord>> {
        let mut slides = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let mut s = load_slide(self.resolve(e))?;
            if s.label != e.label || s.center_id != e.center_id {
                return Err(Error::Malformed(format!(
                    "slide {} disagrees with its manifest row",
                    e.slide_id
                )));
            }
            s.slide_id = e.slide_id.clone();
            if let Some(first) = slides.first().map(SlideRecord::feature_dim) {
                if s.feature_dim() != first {
                    return Err(Error::Malformed(format!(
                        "slide {} has {} features, expected {first}",
                        e.slide_id,
                        s.feature_dim()
                    )));
                }
            }
            slides.push(s);
        }
        Ok(slides)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render() {
        let text = "slide_id,path,label,center_id\na,a.gmil,1,c0\nb,sub/b.gmil,0,c1\n";
        let m = Manifest::parse(text, "/data").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.entries()[0].label, Label::Tumor);
        assert_eq!(m.resolve(&m.entries()[1]), PathBuf::from("/data/sub/b.gmil"));
        assert_eq!(m.to_csv(), text);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Manifest::parse("id,path\n", ".").is_err());
        let dup = "slide_id,path,label,center_id\na,a,1,c\na,b,0,c\n";
        assert!(Manifest::parse(dup, ".").is_err());
        let label = "slide_id,path,label,center_id\na,a,2,c\n";
        assert!(Manifest::parse(label, ".").is_err());
    }
}
