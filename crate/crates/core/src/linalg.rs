//! Dense least squares by Householder QR.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::sqrt;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Minimises `|y - X b|²` where `columns[j]` is column `j` of `X`.
///
/// A column whose remaining norm after orthogonalising against the earlier
/// columns is negligible makes the design singular; the error names it
/// together with the earlier columns it depends on.
pub fn least_squares(columns: &[Vec<f64>], names: &[String], y: &[f64]) -> Result<LeastSquares> {
    let p = columns.len();
    let n = y.len();
    if names.len() != p {
        return Err(Error::Dimension(format!(
            "{} column names for {p} columns",
            names.len()
        )));
    }
    if let Some(j) = columns.iter().position(|c| c.len() != n) {
        return Err(Error::Dimension(format!(
            "column {} has {} rows, response has {n}",
            names[j],
            columns[j].len()
        )));
    }
    if p == 0 || n < p {
        return Err(Error::Dimension(format!(
            "least squares needs at least as many rows as columns ({n} < {p})"
        )));
    }

    let mut a: Vec<Vec<f64>> = columns.to_vec();
    let mut qty = y.to_vec();
    let scale: Vec<f64> = a.iter().map(|c| norm(c)).collect();
    let mut diag = vec![0.0; p];

    for k in 0..p {
        let col_norm = norm(&a[k][k..]);
        let tol = 1e-10 * scale[k].max(f64::MIN_POSITIVE) * sqrt(n as f64);
        if col_norm <= tol || scale[k] == 0.0 {
            return Err(Error::Singular {
                columns: dependent_columns(&a, &diag, k, names),
            });
        }
        let alpha = if a[k][k] > 0.0 { -col_norm } else { col_norm };
        // v = x - alpha e1, stored in place of the column.
        a[k][k] -= alpha;
        let vnorm2 = a[k][k..].iter().map(|v| v * v).sum::<f64>();
        let (head, tail) = a.split_at_mut(k + 1);
        let v = &head[k][k..];
        for col in tail.iter_mut() {
            reflect(v, vnorm2, &mut col[k..]);
        }
        reflect(v, vnorm2, &mut qty[k..]);
        diag[k] = alpha;
    }

    // Back substitution on R b = Qᵀy.
    let mut b = vec![0.0; p];
    for k in (0..p).rev() {
        let mut s = qty[k];
        for j in k + 1..p {
            s -= a[j][k] * b[j];
        }
        b[k] = s / diag[k];
    }
    let residuals = (0..n)
        .map(|t| y[t] - columns.iter().zip(&b).map(|(c, bj)| c[t] * bj).sum::<f64>())
        .collect();
    Ok(LeastSquares {
        coefficients: b,
        residuals,
    })
}

fn norm(v: &[f64]) -> f64 {
    sqrt(v.iter().map(|x| x * x).sum())
}

fn reflect(v: &[f64], vnorm2: f64, x: &mut [f64]) {
    let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let f = 2.0 * dot / vnorm2;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= f * vi;
    }
}

/// Column `k` lies in the span of columns `0..k`; solve `R c = r_k` for the
/// combination and report the columns that take part.
fn dependent_columns(a: &[Vec<f64>], diag: &[f64], k: usize, names: &[String]) -> Vec<String> {
    let mut c = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = a[k][i];
        for j in i + 1..k {
            s -= a[j][i] * c[j];
        }
        c[i] = s / diag[i];
    }
    let size = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out: Vec<String> = (0..k)
        .filter(|&i| c[i].abs() > 1e-8 * size.max(1.0))
        .map(|i| names[i].clone())
        .collect();
    out.push(names[k].clone());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("c{j}")).collect()
    }

    // Gaussian elimination on the normal equations.
    fn normal_equations(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let p = cols.len();
        let mut m: Vec<Vec<f64>> = (0..p)
            .map(|i| {
                let mut row: Vec<f64> = (0..p)
                    .map(|j| cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum())
                    .collect();
                row.push(cols[i].iter().zip(y).map(|(a, b)| a * b).sum());
                row
            })
            .collect();
        for k in 0..p {
            let piv = (k..p)
                .max_by(|&a, &b| m[a][k].abs().total_cmp(&m[b][k].abs()))
                .unwrap();
            m.swap(k, piv);
            for i in k + 1..p {
                let f = m[i][k] / m[k][k];
                for j in k..=p {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
        let mut b = vec![0.0; p];
        for k in (0..p).rev() {
            b[k] = (m[k][p] - (k + 1..p).map(|j| m[k][j] * b[j]).sum::<f64>()) / m[k][k];
        }
        b
    }

    #[test]
    fn matches_normal_equations() {
        let n = 40;
        let cols = vec![
            vec![1.0; n],
            (0..n).map(|t| t as f64 / 10.0).collect::<Vec<_>>(),
            (0..n).map(|t| libm::sin(t as f64)).collect::<Vec<_>>(),
        ];
        let y: Vec<f64> = (0..n)
            .map(|t| {
                0.5 + 0.3 * t as f64 / 10.0 - 2.0 * libm::sin(t as f64)
                    + libm::cos(3.0 * t as f64) * 0.1
            })
            .collect();
        let ls = least_squares(&cols, &names(3), &y).unwrap();
        let oracle = normal_equations(&cols, &y);
        for (a, b) in ls.coefficients.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10);
        }
        // Residuals are orthogonal to every column.
        for c in &cols {
            let dot: f64 = c.iter().zip(&ls.residuals).map(|(a, b)| a * b).sum();
            assert!(dot.abs() < 1e-10);
        }
    }

    #[test]
    fn exact_fit_is_recovered() {
        let cols = vec![vec![1.0, 1.0, 1.0, 1.0], vec![0.0, 1.0, 2.0, 3.0]];
        let y = [2.0, 5.0, 8.0, 11.0];
        let ls = least_squares(&cols, &names(2), &y).unwrap();
        assert!(
            (ls.coefficients[0] - 2.0).abs() < 1e-12 && (ls.coefficients[1] - 3.0).abs() < 1e-12
        );
    }

    #[test]
    fn collinear_columns_are_named() {
        let a: Vec<f64> = (0..10).map(|t| t as f64).collect();
        let b: Vec<f64> = (0..10).map(|t| libm::cos(t as f64)).collect();
        let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - y).collect();
        let cols = vec![a, vec![1.0; 10], b, c];
        let nm = ["a", "one", "b", "c"].map(|s| s.to_string()).to_vec();
        match least_squares(&cols, &nm, &[0.0; 10]) {
            Err(Error::Singular { columns }) => assert_eq!(columns, ["a", "b", "c"]),
            other => panic!("{other:?}"),
        }
        let zero = vec![vec![1.0; 5], vec![0.0; 5]];
        assert!(matches!(
            least_squares(&zero, &names(2), &[1.0; 5]),
            Err(Error::Singular { .. })
        ));
    }
}
