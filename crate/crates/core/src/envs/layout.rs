use std::fmt;

use crate::error::{Error, Result};
use crate::nn::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Floor,
    Hazard,
}

/// Rectangular grid map.
///
/// ASCII form: `#` wall, `.` floor, `G` goal, `H` hazard, `S` start, one row
/// per line. `G` and `S` mark floor cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridLayout {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    start: Option<usize>,
    goal: Option<usize>,
    floor_index: Vec<Option<usize>>,
    floor_cells: Vec<usize>,
}

impl GridLayout {
    fn build(
        width: usize,
        height: usize,
        cells: Vec<Cell>,
        start: Option<usize>,
        goal: Option<usize>,
    ) -> Result<Self> {
        let mut floor_index = vec![None; cells.len()];
        let mut floor_cells = Vec::new();
        for (i, c) in cells.iter().enumerate() {
            if *c != Cell::Wall {
                floor_index[i] = Some(floor_cells.len());
                floor_cells.push(i);
            }
        }
        if floor_cells.len() < 2 {
            return Err(Error::Layout("layout needs at least two floor cells".into()));
        }
        Ok(GridLayout {
            width,
            height,
            cells,
            start,
            goal,
            floor_index,
            floor_cells,
        })
    }

    pub fn parse(ascii: &str) -> Result<Self> {
        let rows: Vec<&str> = ascii
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        if rows.is_empty() {
            return Err(Error::Layout("empty layout".into()));
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut cells = Vec::with_capacity(width * height);
        let (mut start, mut goal) = (None, None);
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::Layout(format!(
                    "row {r} has width {}, expected {width}",
                    row.chars().count()
                )));
            }
            for (c, ch) in row.chars().enumerate() {
                let idx = r * width + c;
                let cell = match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Floor,
                    'H' => Cell::Hazard,
                    'G' => {
                        if goal.replace(idx).is_some() {
                            return Err(Error::Layout("more than one goal".into()));
                        }
                        Cell::Floor
                    }
                    'S' => {
                        if start.replace(idx).is_some() {
                            return Err(Error::Layout("more than one start".into()));
                        }
                        Cell::Floor
                    }
                    other => {
                        return Err(Error::Layout(format!(
                            "unknown cell `{other}` at row {r}, column {c}"
                        )))
                    }
                };
                cells.push(cell);
            }
        }
        GridLayout::build(width, height, cells, start, goal)
    }

    /// Four rooms separated by a wall cross with one doorway per wall segment.
    /// Doorway positions come from `seed`; with `with_goal` a goal cell is also
    /// drawn from the same stream.
    pub fn four_rooms(side: usize, seed: u64, with_goal: bool) -> Result<Self> {
        if side < 7 {
            return Err(Error::Layout(format!("four rooms needs side >= 7, got {side}")));
        }
        let mut rng = Rng::new(seed, 0x4f52);
        let mid = side / 2;
        let mut cells = vec![Cell::Floor; side * side];
        for r in 0..side {
            for c in 0..side {
                if r == 0 || c == 0 || r == side - 1 || c == side - 1 || r == mid || c == mid {
                    cells[r * side + c] = Cell::Wall;
                }
            }
        }
        // Segments: (fixed coordinate, range of the free coordinate).
        let upper = 1..mid;
        let lower = mid + 1..side - 1;
        let pick = |rng: &mut Rng, range: std::ops::Range<usize>| {
            range.start + rng.below(range.end - range.start)
        };
        let r = pick(&mut rng, upper.clone());
        cells[r * side + mid] = Cell::Floor;
        let r = pick(&mut rng, lower.clone());
        cells[r * side + mid] = Cell::Floor;
        let c = pick(&mut rng, upper);
        cells[mid * side + c] = Cell::Floor;
        let c = pick(&mut rng, lower);
        cells[mid * side + c] = Cell::Floor;
        let mut layout = GridLayout::build(side, side, cells, None, None)?;
        if with_goal {
            let g = layout.floor_cells[rng.below(layout.floor_cells.len())];
            layout.goal = Some(g);
        }
        Ok(layout)
    }

    /// Open room with rows of hazards, each leaving a two-cell gap on
    /// alternating sides. Start is the top-left corner, goal the bottom-right,
    /// and the shortest route crosses the hazard rows.
    pub fn hazard_grid(side: usize, seed: u64) -> Result<Self> {
        if side < 6 {
            return Err(Error::Layout(format!("hazard grid needs side >= 6, got {side}")));
        }
        let mut cells = vec![Cell::Floor; side * side];
        for r in 0..side {
            for c in 0..side {
                if r == 0 || c == 0 || r == side - 1 || c == side - 1 {
                    cells[r * side + c] = Cell::Wall;
                }
            }
        }
        let mut gap_right = seed % 2 == 0;
        let mut r = 2;
        while r + 2 < side {
            for c in 1..side - 1 {
                let in_gap = if gap_right { c >= side - 3 } else { c <= 2 };
                if !in_gap {
                    cells[r * side + c] = Cell::Hazard;
                }
            }
            gap_right = !gap_right;
            r += 2;
        }
        let start = side + 1;
        let goal = (side - 2) * side + side - 2;
        GridLayout::build(side, side, cells, Some(start), Some(goal))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell(&self, idx: usize) -> Cell {
        self.cells[idx]
    }

    pub fn start(&self) -> Option<usize> {
        self.start
    }

    pub fn goal(&self) -> Option<usize> {
        self.goal
    }

    pub fn n_floor(&self) -> usize {
        self.floor_cells.len()
    }

    /// Cell indices of all non-wall cells, in row-major order.
    pub fn floor_cells(&self) -> &[usize] {
        &self.floor_cells
    }

    pub fn floor_index(&self, cell: usize) -> Option<usize> {
        self.floor_index.get(cell).copied().flatten()
    }

    pub fn is_floor(&self, cell: usize) -> bool {
        self.floor_index(cell).is_some()
    }

    /// Cell reached by moving in direction `action` (N, E, S, W), or `cell`
    /// itself when the move is blocked.
    pub fn neighbor(&self, cell: usize, action: usize) -> usize {
        let (r, c) = (cell / self.width, cell % self.width);
        let target = match action {
            0 if r > 0 => Some(cell - self.width),
            1 if c + 1 < self.width => Some(cell + 1),
            2 if r + 1 < self.height => Some(cell + self.width),
            3 if c > 0 => Some(cell - 1),
            _ => None,
        };
        match target {
            Some(t) if self.is_floor(t) => t,
            _ => cell,
        }
    }
}

impl fmt::Display for GridLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.height {
            for c in 0..self.width {
                let idx = r * self.width + c;
                let ch = if Some(idx) == self.goal {
                    'G'
                } else if Some(idx) == self.start {
                    'S'
                } else {
                    match self.cells[idx] {
                        Cell::Wall => '#',
                        Cell::Floor => '.',
                        Cell::Hazard => 'H',
                    }
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
