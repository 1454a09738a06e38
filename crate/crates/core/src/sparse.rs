//! Orthogonal matching pursuit over a patch dictionary, and the class-wise
//! per-pixel reconstruction errors that feed the vote.

use crate::error::{Error, Result};
use crate::model::{PatchDictionary, SparseCode};

/// Diagonal loading of the normal equations.
pub const RIDGE: f64 = 1e-12;

/// Default residual tolerance; small enough that coding runs to `W` atoms.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-9;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves the symmetric positive definite system `a x = b` (row-major `n×n`)
/// by Cholesky factorization.
fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s = a[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l[i * n + k] * y[k]).sum::<f64>()) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - (i + 1..n).map(|k| l[k * n + i] * x[k]).sum::<f64>()) / l[i * n + i];
    }
    Some(x)
}

/// Least-squares weights of `target` on `columns[support]`, via ridge-loaded
/// normal equations.
fn least_squares(columns: &[Vec<f64>], support: &[usize], target: &[f64]) -> Vec<f64> {
    let n = support.len();
    let mut gram = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for (i, &ci) in support.iter().enumerate() {
        rhs[i] = dot(&columns[ci], target);
        for (j, &cj) in support.iter().enumerate().take(i + 1) {
            let g = dot(&columns[ci], &columns[cj]);
            gram[i * n + j] = g;
            gram[j * n + i] = g;
        }
        gram[i * n + i] += RIDGE;
    }
    cholesky_solve(&gram, &rhs, n).unwrap_or_else(|| vec![0.0; n])
}

/// Greedy sparse approximation of `target` with at most `max_atoms` columns.
///
/// Atoms are selected by their absolute inner product with the residual
/// after ℓ2-normalization (zero columns are never selected); coefficients are
/// refit on the original columns after each selection. Stops after
/// `max_atoms` selections, once the residual norm drops below
/// `residual_tol`, or when no remaining atom correlates with the residual.
pub fn omp(columns: &[Vec<f64>], target: &[f64], max_atoms: usize, residual_tol: f64) -> Result<SparseCode> {
    if columns.is_empty() {
        return Err(Error::invalid("dictionary", "at least one column is required"));
    }
    if max_atoms == 0 {
        return Err(Error::invalid("sparse coding", "the atom budget must be at least 1"));
    }
    if let Some(c) = columns.iter().find(|c| c.len() != target.len()) {
        return Err(Error::LengthMismatch {
            what: "dictionary column",
            got: c.len(),
            expected: target.len(),
        });
    }
    let norms: Vec<f64> = columns.iter().map(|c| norm(c)).collect();
    if norms.iter().all(|&n| n == 0.0) {
        return Err(Error::DegenerateDictionary);
    }

    let mut selected: Vec<usize> = Vec::new();
    let mut coefficients: Vec<f64> = Vec::new();
    let mut residual = target.to_vec();
    let mut residual_norm = norm(&residual);
    let mut residual_trace = vec![residual_norm];

    while selected.len() < max_atoms && residual_norm >= residual_tol {
        let mut best: Option<(f64, usize)> = None;
        for (i, c) in columns.iter().enumerate() {
            if norms[i] == 0.0 || selected.contains(&i) {
                continue;
            }
            let score = (dot(c, &residual) / norms[i]).abs();
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, i));
            }
        }
        let Some((score, atom)) = best else { break };
        if score == 0.0 {
            break;
        }
        selected.push(atom);
        coefficients = least_squares(columns, &selected, target);
        residual.copy_from_slice(target);
        for (&c, &w) in selected.iter().zip(&coefficients) {
            for (r, v) in residual.iter_mut().zip(&columns[c]) {
                *r -= w * v;
            }
        }
        residual_norm = norm(&residual);
        residual_trace.push(residual_norm);
    }

    Ok(SparseCode {
        selected,
        coefficients,
        residual_norm,
        residual_trace,
    })
}

/// Sparse-codes a vectorized patch against its dictionary.
pub fn code_patch(dictionary: &PatchDictionary, target: &[f64], max_atoms: usize, residual_tol: f64) -> Result<SparseCode> {
    omp(dictionary.columns(), target, max_atoms, residual_tol)
}

/// Z×K reconstruction errors: entry `[z][k - 1]` is the distance between
/// pixel `z` and the part of the reconstruction contributed by selected
/// columns labeled `k` at that pixel, or `None` when no such column exists.
pub fn classwise_pixel_residuals(
    dictionary: &PatchDictionary,
    code: &SparseCode,
    patch: &[f64],
) -> Vec<Vec<Option<f64>>> {
    let bands = dictionary.bands();
    let k = dictionary.class_count() as usize;
    let pixels = patch.len().checked_div(bands).unwrap_or(0);
    let mut out = vec![vec![None; k]; pixels];
    let mut partial = vec![0.0; bands];
    for (z, row) in out.iter_mut().enumerate() {
        let x = &patch[z * bands..(z + 1) * bands];
        for class in 1..=k as u32 {
            let mut present = false;
            partial.iter_mut().for_each(|v| *v = 0.0);
            for (&c, &w) in code.selected.iter().zip(&code.coefficients) {
                if dictionary.pixel_labels()[c][z] != class {
                    continue;
                }
                present = true;
                let block = &dictionary.columns()[c][z * bands..(z + 1) * bands];
                for (p, v) in partial.iter_mut().zip(block) {
                    *p += w * v;
                }
            }
            if present {
                let err = x
                    .iter()
                    .zip(&partial)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                row[class as usize - 1] = Some(err);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_training_set;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Residual norm of the exact least-squares fit on `support` (Gram-Schmidt).
    fn projection_residual(columns: &[Vec<f64>], support: &[usize], target: &[f64]) -> f64 {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for &s in support {
            let mut v = columns[s].clone();
            for b in &basis {
                let p = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
            let n = norm(&v);
            if n > 1e-12 {
                basis.push(v.iter().map(|x| x / n).collect());
            }
        }
        let mut r = target.to_vec();
        for b in &basis {
            let p = dot(&r, b);
            r.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        norm(&r)
    }

    #[test]
    fn exact_atom() {
        let cols = vec![vec![1.0, 0.0, 1.0], vec![0.0, 2.0, 1.0], vec![1.0, 1.0, 0.0]];
        let code = omp(&cols, &cols[1], 1, 1e-9).unwrap();
        assert_eq!(code.selected, vec![1]);
        assert!((code.coefficients[0] - 1.0).abs() < 1e-9);
        assert!(code.residual_norm < 1e-9);
    }

    #[test]
    fn orthogonal_target() {
        let cols = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]];
        let code = omp(&cols, &[0.0, 0.0, 3.0], 2, 1e-9).unwrap();
        assert!(code.selected.is_empty());
        assert_eq!(code.residual_norm, 3.0);
    }

    #[test]
    fn recovers_two_atom_support() {
        let cols = vec![vec![1.0, 0.2, 0.0, 0.1], vec![0.3, 1.0, 0.4, 0.0], vec![0.0, 0.1, 1.0, 0.5]];
        let target: Vec<f64> = (0..4).map(|i| 2.0 * cols[0][i] - cols[2][i]).collect();
        let code = omp(&cols, &target, 2, 1e-12).unwrap();
        let mut support = code.selected.clone();
        support.sort();
        assert_eq!(support, vec![0, 2]);
        let w0 = code.coefficients[code.selected.iter().position(|&s| s == 0).unwrap()];
        let w2 = code.coefficients[code.selected.iter().position(|&s| s == 2).unwrap()];
        assert!((w0 - 2.0).abs() < 1e-9 && (w2 + 1.0).abs() < 1e-9);
        let best = [[0, 1], [0, 2], [1, 2]]
            .iter()
            .map(|s| projection_residual(&cols, s, &target))
            .fold(f64::INFINITY, f64::min);
        assert!(code.residual_norm <= best + 1e-9);
    }

    #[test]
    fn errors() {
        assert!(matches!(omp(&[vec![0.0, 0.0]], &[1.0, 0.0], 1, 0.0), Err(Error::DegenerateDictionary)));
        assert!(omp(&[vec![1.0]], &[1.0], 0, 0.0).is_err());
        assert!(omp(&[], &[1.0], 1, 0.0).is_err());
        // zero columns are skipped, not fatal
        let code = omp(&[vec![0.0, 0.0], vec![0.0, 1.0]], &[0.0, 2.0], 2, 1e-9).unwrap();
        assert_eq!(code.selected, vec![1]);
    }

    #[test]
    fn orthonormal_columns_give_top_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let dim = 6;
            let target: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let cols: Vec<Vec<f64>> = (0..dim).map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
            let code = omp(&cols, &target, 3, 0.0).unwrap();
            let mut order: Vec<usize> = (0..dim).collect();
            order.sort_by(|&a, &b| target[b].abs().total_cmp(&target[a].abs()));
            assert_eq!(code.selected, order[..3].to_vec());
            for (&s, &w) in code.selected.iter().zip(&code.coefficients) {
                assert!((w - target[s]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn classwise_residuals() {
        let ts = validate_training_set(&[vec![1.0], vec![3.0], vec![-2.0]], &[1, 2, 1], 1).unwrap();
        // two columns over Z=2, M=1
        let dict = PatchDictionary::assemble(vec![vec![0, 1], vec![1, 2]], &ts).unwrap();
        let code = SparseCode {
            selected: vec![0, 1],
            coefficients: vec![0.5, 2.0],
            residual_norm: 0.0,
            residual_trace: vec![],
        };
        let patch = [1.5, 4.0];
        let r = classwise_pixel_residuals(&dict, &code, &patch);
        // pixel 0: class 1 from col 0 (0.5*1) -> |1.5-0.5| = 1; class 2 from col 1 (2*3) -> |1.5-6| = 4.5
        assert_eq!(r[0], vec![Some(1.0), Some(4.5)]);
        // pixel 1: class 2 from col 0 (0.5*3) -> |4-1.5| = 2.5; class 1 from col 1 (2*-2) -> |4+4| = 8
        assert_eq!(r[1], vec![Some(8.0), Some(2.5)]);

        let empty = SparseCode { selected: vec![], coefficients: vec![], residual_norm: 0.0, residual_trace: vec![] };
        assert!(classwise_pixel_residuals(&dict, &empty, &patch).iter().flatten().all(Option::is_none));

        let single = PatchDictionary::assemble(vec![vec![0, 0]], &ts).unwrap();
        let code = omp(single.columns(), &[1.0, 1.0], 1, 1e-9).unwrap();
        let r = classwise_pixel_residuals(&single, &code, &[1.0, 1.0]);
        for row in r {
            assert!(row[0].unwrap() < 1e-9);
            assert_eq!(row[1], None);
        }
    }

    proptest! {
        #[test]
        fn residual_is_monotone_and_sparse(seed in any::<u64>(), dim in 2usize..10, ncols in 1usize..8, w in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cols: Vec<Vec<f64>> = (0..ncols).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let target: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let code = omp(&cols, &target, w, 1e-9).unwrap();
            prop_assert!(code.selected.len() <= w);
            let mut sorted = code.selected.clone();
            sorted.sort();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), code.selected.len());
            for pair in code.residual_trace.windows(2) {
                prop_assert!(pair[1] <= pair[0] + 1e-12 * (1.0 + pair[0]));
            }
        }
    }
}
