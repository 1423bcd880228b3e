use std::sync::Arc;

use crate::domain::Grid;
use crate::error::{Error, Result};

/// Dense cell-pair table for a custom kernel; piecewise constant in (q, q′).
#[derive(Clone, Debug)]
pub struct KernelTable {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl KernelTable {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if values.len() != n * n {
            return Err(Error::config(format!(
                "kernel table has {} entries, expected {}",
                values.len(),
                n * n
            )));
        }
        Ok(KernelTable { grid, values })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.len() + j]
    }

    /// Value for the cells containing q and q′; +∞ outside the domain.
    pub fn lookup(&self, q: &[f64], q2: &[f64]) -> f64 {
        match (self.grid.cell_of(q), self.grid.cell_of(q2)) {
            (Some(i), Some(j)) => self.get(i, j),
            _ => f64::INFINITY,
        }
    }
}

/// Parse `i,j,value` rows (0-based node indices). A header row and `#`
/// comments are allowed. When only one of (i, j) and (j, i) is listed it is
/// mirrored; listing both with different values is kept as is, so asymmetric
/// tables survive to the hypothesis check.
pub fn parse_kernel_csv(text: &str, grid: Arc<Grid>) -> Result<KernelTable> {
    let n = grid.len();
    let mut values = vec![f64::NAN; n * n];
    let mut given = vec![false; n * n];
    let mut seen_row = false;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::config(format!(
                "kernel csv line {lineno}: expected 3 fields i,j,value, got {}",
                fields.len()
            )));
        }
        let Ok(i) = fields[0].parse::<usize>() else {
            if !seen_row {
                seen_row = true;
                continue; // header
            }
            return Err(Error::config(format!("kernel csv line {lineno}: bad node index {:?}", fields[0])));
        };
        seen_row = true;
        let j = fields[1]
            .parse::<usize>()
            .map_err(|_| Error::config(format!("kernel csv line {lineno}: bad node index {:?}", fields[1])))?;
        let v = fields[2]
            .parse::<f64>()
            .map_err(|_| Error::config(format!("kernel csv line {lineno}: bad value {:?}", fields[2])))?;
        if i >= n || j >= n {
            return Err(Error::config(format!(
                "kernel csv line {lineno}: index out of range for a grid with {n} nodes"
            )));
        }
        if !v.is_finite() {
            return Err(Error::config(format!("kernel csv line {lineno}: value must be finite")));
        }
        values[i * n + j] = v;
        given[i * n + j] = true;
    }
    for i in 0..n {
        for j in 0..n {
            if !given[i * n + j] {
                if given[j * n + i] {
                    values[i * n + j] = values[j * n + i];
                } else {
                    return Err(Error::config(format!("kernel csv: no value for node pair ({i}, {j})")));
                }
            }
        }
    }
    KernelTable::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_grid;

    fn grid2() -> Arc<Grid> {
        Arc::new(build_grid(1, &[[0.0, 1.0]], 2).unwrap())
    }

    #[test]
    fn mirrors_half_tables() {
        let t = parse_kernel_csv("i,j,value\n0,0,1\n0,1,2\n1,1,3\n", grid2()).unwrap();
        assert_eq!(t.get(1, 0), 2.0);
        assert_eq!(t.lookup(&[0.1], &[0.9]), 2.0);
        assert_eq!(t.lookup(&[0.1], &[1.9]), f64::INFINITY);
    }

    #[test]
    fn errors_name_the_line() {
        let err = parse_kernel_csv("0,0,1\n0,1\n", grid2()).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = parse_kernel_csv("0,0,1\n0,5,1\n", grid2()).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(parse_kernel_csv("0,0,1\n", grid2()).is_err());
    }
}
