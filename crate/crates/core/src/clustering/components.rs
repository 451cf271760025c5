use std::collections::VecDeque;

/// Cell value marking "no tissue" in a [`LabelGrid`].
pub const BACKGROUND: i32 = -1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
        const EIGHT: [(isize, isize); 8] =
            [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }

    pub fn from_number(n: u32) -> Option<Self> {
        match n {
            4 => Some(Connectivity::Four),
            8 => Some(Connectivity::Eight),
            _ => None,
        }
    }
}

/// Row-major integer grid of cluster labels; [`BACKGROUND`] marks empty cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelGrid {
    pub height: usize,
    pub width: usize,
    pub cells: Vec<i32>,
}

impl LabelGrid {
    pub fn new(height: usize, width: usize, cells: Vec<i32>) -> Self {
        assert_eq!(cells.len(), height * width, "grid cell count");
        Self { height, width, cells }
    }

    pub fn background(height: usize, width: usize) -> Self {
        Self::new(height, width, vec![BACKGROUND; height * width])
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> i32 {
        self.cells[row * self.width + col]
    }

    /// In-bounds neighbours of `(row, col)` under `conn`.
    pub fn neighbors(
        &self,
        row: usize,
        col: usize,
        conn: Connectivity,
    ) -> impl Iterator<Item = (usize, usize)> + '_ {
        conn.offsets().iter().filter_map(move |&(dr, dc)| {
            let r = row as isize + dr;
            let c = col as isize + dc;
            (r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width)
                .then_some((r as usize, c as usize))
        })
    }
}

/// Region labelling: `regions` holds a dense region id per cell (or
/// [`BACKGROUND`]), numbered in row-major order of each region's first cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Components {
    pub regions: LabelGrid,
    pub count: usize,
}

/// Labels maximal groups of equal-valued, non-background cells that are
/// connected under `conn`.
pub fn connected_components(grid: &LabelGrid, conn: Connectivity) -> Components {
    let mut regions = LabelGrid::background(grid.height, grid.width);
    let mut count = 0usize;
    let mut queue = VecDeque::new();
    for start in 0..grid.cells.len() {
        let label = grid.cells[start];
        if label == BACKGROUND || regions.cells[start] != BACKGROUND {
            continue;
        }
        let id = count as i32;
        count += 1;
        regions.cells[start] = id;
        queue.push_back((start / grid.width, start % grid.width));
        while let Some((r, c)) = queue.pop_front() {
            for (nr, nc) in grid.neighbors(r, c, conn) {
                let idx = nr * grid.width + nc;
                if grid.cells[idx] == label && regions.cells[idx] == BACKGROUND {
                    regions.cells[idx] = id;
                    queue.push_back((nr, nc));
                }
            }
        }
    }
    Components { regions, count }
}
