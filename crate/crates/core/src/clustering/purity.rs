use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Per-cluster class counts: `table[cluster][class] = count`.
pub fn contingency(assignments: &[usize], classes: &[usize]) -> Result<BTreeMap<usize, BTreeMap<usize, usize>>> {
    if assignments.len() != classes.len() {
        return Err(Error::shape(format!(
            "{} assignments for {} class labels",
            assignments.len(),
            classes.len()
        )));
    }
    let mut table: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (&a, &c) in assignments.iter().zip(classes) {
        *table.entry(a).or_default().entry(c).or_default() += 1;
    }
    Ok(table)
}

/// Fraction of points whose cluster's majority class equals their own.
pub fn cluster_purity(assignments: &[usize], classes: &[usize]) -> Result<f64> {
    if assignments.is_empty() {
        return Err(Error::Empty("cluster purity of zero points".into()));
    }
    let table = contingency(assignments, classes)?;
    let majority: usize = table.values().map(|row| row.values().copied().max().unwrap_or(0)).sum();
    Ok(majority as f64 / assignments.len() as f64)
}
