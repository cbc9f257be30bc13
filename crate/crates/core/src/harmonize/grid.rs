use serde::{Deserialize, Serialize};

use crate::ingest::VarKind;

/// Provenance of a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mark {
    Observed,
    Imputed,
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub value: Option<f64>,
    pub mark: Mark,
}

impl Cell {
    pub const MISSING: Cell = Cell {
        value: None,
        mark: Mark::Missing,
    };

    pub fn observed(v: f64) -> Self {
        Cell {
            value: Some(v),
            mark: Mark::Observed,
        }
    }

    pub fn imputed(v: f64) -> Self {
        Cell {
            value: Some(v),
            mark: Mark::Imputed,
        }
    }

    pub fn is_missing(&self) -> bool {
        self.mark == Mark::Missing
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: VarKind,
    pub medication: bool,
}

/// Processing stages applied to a grid, in application order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Binned,
    TruncatePad,
    Relationships,
    Indicators,
    SampleAndHold,
    Fill,
    Normalize,
}

/// Stays' first-24 h harmonized values: one row per hour, one column per
/// canonical variable, with a provenance mark on every cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyGrid {
    pub stay_id: String,
    pub columns: Vec<Column>,
    /// `rows[h][c]`
    pub rows: Vec<Vec<Cell>>,
    /// `indicators[h][c]` is 1 when the cell was actually observed.
    #[serde(default)]
    pub indicators: Option<Vec<Vec<u8>>>,
    pub stages: Vec<Stage>,
}

impl HourlyGrid {
    pub fn empty(stay_id: &str, columns: Vec<Column>, n_rows: usize) -> Self {
        let width = columns.len();
        HourlyGrid {
            stay_id: stay_id.to_string(),
            columns,
            rows: vec![vec![Cell::MISSING; width]; n_rows],
            indicators: None,
            stages: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn col(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn get(&self, hour: usize, name: &str) -> Option<Cell> {
        self.col(name).map(|c| self.rows[hour][c])
    }

    pub fn value(&self, hour: usize, name: &str) -> Option<f64> {
        self.get(hour, name).and_then(|c| c.value)
    }

    pub fn set(&mut self, hour: usize, name: &str, cell: Cell) {
        if let Some(c) = self.col(name) {
            self.rows[hour][c] = cell;
        }
    }

    /// Values of one column with the hour index.
    pub fn column_values(&self, name: &str) -> Vec<Option<f64>> {
        match self.col(name) {
            Some(c) => self.rows.iter().map(|r| r[c].value).collect(),
            None => vec![None; self.rows.len()],
        }
    }

    pub fn count_marks(&self, mark: Mark) -> usize {
        self.rows
            .iter()
            .flat_map(|r| r.iter())
            .filter(|c| c.mark == mark)
            .count()
    }
}

/// Column-free grid encoding for artifacts: one mark character per cell
/// (`o` observed, `i` imputed, `.` missing) and `0`/`1` indicator strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactGrid {
    pub stay_id: String,
    pub values: Vec<Vec<Option<f64>>>,
    pub marks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indicators: Option<Vec<String>>,
    pub stages: Vec<Stage>,
}

impl CompactGrid {
    pub fn encode(g: &HourlyGrid) -> Self {
        let mark = |m: Mark| match m {
            Mark::Observed => 'o',
            Mark::Imputed => 'i',
            Mark::Missing => '.',
        };
        CompactGrid {
            stay_id: g.stay_id.clone(),
            values: g.rows.iter().map(|r| r.iter().map(|c| c.value).collect()).collect(),
            marks: g.rows.iter().map(|r| r.iter().map(|c| mark(c.mark)).collect()).collect(),
            indicators: g
                .indicators
                .as_ref()
                .map(|ind| ind.iter().map(|r| r.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()).collect()),
            stages: g.stages.clone(),
        }
    }

    /// Rebuild the grid; `None` when the shape disagrees with `columns`.
    pub fn decode(&self, columns: &[Column]) -> Option<HourlyGrid> {
        let width = columns.len();
        let mut rows = Vec::with_capacity(self.values.len());
        if self.marks.len() != self.values.len() {
            return None;
        }
        for (vals, marks) in self.values.iter().zip(&self.marks) {
            if vals.len() != width || marks.chars().count() != width {
                return None;
            }
            let row = vals
                .iter()
                .zip(marks.chars())
                .map(|(v, m)| {
                    let mark = match m {
                        'o' => Mark::Observed,
                        'i' => Mark::Imputed,
                        '.' => Mark::Missing,
                        _ => return None,
                    };
                    Some(Cell { value: *v, mark })
                })
                .collect::<Option<Vec<Cell>>>()?;
            rows.push(row);
        }
        let indicators = match &self.indicators {
            Some(ind) => {
                let decoded: Option<Vec<Vec<u8>>> = ind
                    .iter()
                    .map(|r| {
                        (r.len() == width).then(|| r.bytes().map(|b| (b == b'1') as u8).collect())
                    })
                    .collect();
                Some(decoded?)
            }
            None => None,
        };
        Some(HourlyGrid {
            stay_id: self.stay_id.clone(),
            columns: columns.to_vec(),
            rows,
            indicators,
            stages: self.stages.clone(),
        })
    }
}
