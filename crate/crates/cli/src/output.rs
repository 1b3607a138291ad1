//! CSV and JSON writers. Numbers use 17 significant digits and `\n` line
//! endings so reruns are byte-identical.

use std::fmt::Write as _;
use std::path::Path;

use qswitch_core::master::{observable_expectation, AveragedDensities};
use qswitch_core::{ComplexMatrix, MCEstimate, MasterSolution};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

impl Table {
    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| format_number(x)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn emit_csv(table: &Table, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, table.render()).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn entry_columns(states: usize, dim: usize, prefixes: &[&str]) -> Vec<String> {
    let mut header = vec!["t".to_string()];
    for k in 0..states {
        for r in 0..dim {
            for c in 0..dim {
                header.extend(prefixes.iter().map(|p| format!("{p}_{k}_{r}_{c}")));
            }
        }
    }
    header
}

fn push_entries(row: &mut Vec<f64>, rho: &ComplexMatrix) {
    let n = rho.dim();
    for r in 0..n {
        for c in 0..n {
            let z = rho.get(r, c);
            row.push(z.re);
            row.push(z.im);
        }
    }
}

pub fn ode_table(solution: &MasterSolution, dim: usize) -> Table {
    let header = entry_columns(solution.components.len(), dim, &["re", "im"]);
    let rows = solution
        .grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut row = vec![t];
            for per_state in &solution.components {
                push_entries(&mut row, &per_state[i]);
            }
            row
        })
        .collect();
    Table { header, rows }
}

pub fn mc_table(estimate: &MCEstimate, dim: usize) -> Table {
    let header = entry_columns(estimate.mean.len(), dim, &["re", "im", "se_re", "se_im"]);
    let rows = estimate
        .grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut row = vec![t];
            for k in 0..estimate.mean.len() {
                let mean = estimate.mean[k][i].as_matrix();
                let (se_re, se_im) = (&estimate.stderr_re[k][i], &estimate.stderr_im[k][i]);
                for r in 0..dim {
                    for c in 0..dim {
                        row.extend([mean[(r, c)].re, mean[(r, c)].im, se_re[(r, c)], se_im[(r, c)]]);
                    }
                }
            }
            row
        })
        .collect();
    Table { header, rows }
}

/// Entry-wise `(mc − ode) / max(se, floor)`.
pub fn zscore_table(estimate: &MCEstimate, reference: &MasterSolution, dim: usize, floor: f64) -> Table {
    let header = entry_columns(estimate.mean.len(), dim, &["z_re", "z_im"]);
    let rows = estimate
        .grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut row = vec![t];
            for k in 0..estimate.mean.len() {
                let mean = estimate.mean[k][i].as_matrix();
                let exact = reference.components[k][i].as_matrix();
                for r in 0..dim {
                    for c in 0..dim {
                        let d = mean[(r, c)] - exact[(r, c)];
                        row.push(d.re / estimate.stderr_re[k][i][(r, c)].max(floor));
                        row.push(d.im / estimate.stderr_im[k][i][(r, c)].max(floor));
                    }
                }
            }
            row
        })
        .collect();
    Table { header, rows }
}

pub fn observables_table<S: AveragedDensities>(
    solution: &S,
    observables: &[(String, ComplexMatrix)],
    distribution: &[f64],
) -> Result<Table, CliError> {
    let mut header = vec!["t".to_string()];
    header.extend(observables.iter().map(|(name, _)| name.clone()));
    let mut rows = Vec::with_capacity(solution.grid().len());
    for &t in solution.grid() {
        let mut row = vec![t];
        for (_, a) in observables {
            row.push(observable_expectation(a, solution, distribution, t)?);
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Plain CSV with string cells, for tables mixing names and numbers.
pub fn render_records(header: &[&str], records: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", r.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use qswitch_core::master::integrate_master;
    use qswitch_core::models::goldstein_model;

    fn plus() -> ComplexMatrix {
        ComplexMatrix::from_real_row_major(2, &[0.5, 0.5, 0.5, 0.5]).unwrap()
    }

    fn parse(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
        let mut lines = text.split_terminator('\n');
        let header = lines.next().unwrap().split(',').map(String::from).collect();
        let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
        (header, rows)
    }

    #[test]
    fn ode_csv_shape() {
        let model = goldstein_model(1.0, 0.5, 1.0).unwrap();
        let sol = integrate_master(&model, &[plus(), plus()], &[0.0, 0.5, 1.0]).unwrap();
        let text = ode_table(&sol, 2).render();
        assert_eq!(text.lines().count(), 4);
        assert!(!text.contains('\r'));
        assert!(text.ends_with('\n'));
        for line in text.lines() {
            assert_eq!(line.split(',').count(), 1 + 2 * 2 * 2 * 2);
        }
        assert!(text.starts_with("t,re_0_0_0,im_0_0_0,re_0_0_1,"));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let model = goldstein_model(1.0, 0.5, 1.0).unwrap();
        let grid = [0.0, 0.1, 0.7, 1.3];
        let sol = integrate_master(&model, &[plus(), plus()], &grid).unwrap();
        let table = ode_table(&sol, 2);
        let (header, rows) = parse(&table.render());
        assert_eq!(header, table.header);
        assert_eq!(rows, table.rows);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row[0], grid[i]);
            assert_eq!(row[1], sol.components[0][i].get(0, 0).re);
        }
    }

    #[test]
    fn empty_grid_is_header_only() {
        let model = goldstein_model(1.0, 0.5, 1.0).unwrap();
        let sol = integrate_master(&model, &[plus(), plus()], &[]).unwrap();
        let text = ode_table(&sol, 2).render();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.trim_end().split(',').count(), 17);
    }

    #[test]
    fn number_format_has_seventeen_digits() {
        assert_eq!(format_number(0.1), "1.0000000000000001e-1");
        assert_eq!(format_number(1.0), "1.0000000000000000e0");
        assert_eq!(format_number(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
