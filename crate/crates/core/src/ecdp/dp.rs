use std::ops::Add;

use num_traits::Zero;

use super::{CostMatrix, EcdpError};

/// Order-preserving alignment through a cost matrix, 0-based indices.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonePath<C> {
    pub steps: Vec<(usize, usize)>,
    pub total_cost: C,
}

impl<C> MonotonePath<C> {
    /// Checks that the path runs corner to corner of a `rows x cols` matrix
    /// and each step advances `i`, `j` or both by one.
    pub fn is_valid(&self, rows: usize, cols: usize) -> bool {
        let (Some(&first), Some(&last)) = (self.steps.first(), self.steps.last()) else {
            return false;
        };
        first == (0, 0)
            && last == (rows - 1, cols - 1)
            && self.steps.windows(2).all(|w| {
                let di = w[1].0 as isize - w[0].0 as isize;
                let dj = w[1].1 as isize - w[0].1 as isize;
                (0..=1).contains(&di) && (0..=1).contains(&dj) && di + dj > 0
            })
    }
}

/// Minimum-cost monotone path from `(0, 0)` to `(rows - 1, cols - 1)`.
///
/// The accumulated cost obeys `C[i][j] = D[i][j] + min(C[i-1][j], C[i][j-1],
/// C[i-1][j-1])` with cumulative sums along the first row and column. The
/// backtrack prefers the diagonal predecessor on ties, then the vertical
/// one (`i - 1`), then the horizontal one (`j - 1`).
///
/// Generic over the cost type so exact arithmetic (integers, rationals) can
/// be used as well as floats.
pub fn dp_align<C>(d: &CostMatrix<C>) -> Result<MonotonePath<C>, EcdpError>
where
    C: Copy + PartialOrd + Zero + Add<Output = C>,
{
    let (n1, n2) = (d.rows(), d.cols());
    if n1 == 0 || n2 == 0 {
        return Err(EcdpError::EmptySequence);
    }
    let mut acc: Vec<C> = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        for j in 0..n2 {
            let here = d.get(i, j);
            let value = match (i, j) {
                (0, 0) => here,
                (0, _) => acc[j - 1] + here,
                (_, 0) => acc[(i - 1) * n2] + here,
                _ => {
                    let diag = acc[(i - 1) * n2 + j - 1];
                    let up = acc[(i - 1) * n2 + j];
                    let left = acc[i * n2 + j - 1];
                    let mut m = diag;
                    if up < m {
                        m = up;
                    }
                    if left < m {
                        m = left;
                    }
                    m + here
                }
            };
            acc.push(value);
        }
    }

    let at = |i: usize, j: usize| acc[i * n2 + j];
    let mut steps = Vec::with_capacity(n1 + n2);
    let (mut i, mut j) = (n1 - 1, n2 - 1);
    steps.push((i, j));
    while i > 0 || j > 0 {
        if i == 0 {
            j -= 1;
        } else if j == 0 {
            i -= 1;
        } else {
            let diag = at(i - 1, j - 1);
            let up = at(i - 1, j);
            let left = at(i, j - 1);
            if diag <= up && diag <= left {
                i -= 1;
                j -= 1;
            } else if up <= left {
                i -= 1;
            } else {
                j -= 1;
            }
        }
        steps.push((i, j));
    }
    steps.reverse();
    Ok(MonotonePath {
        steps,
        total_cost: at(n1 - 1, n2 - 1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    /// Exhaustive minimum over every monotone path, summing in path order.
    fn brute_force<C: Copy + PartialOrd + Zero + Add<Output = C>>(d: &CostMatrix<C>) -> C {
        fn rec<C: Copy + PartialOrd + Add<Output = C>>(
            d: &CostMatrix<C>,
            i: usize,
            j: usize,
            acc: C,
            best: &mut Option<C>,
        ) {
            let acc = acc + d.get(i, j);
            if i + 1 == d.rows() && j + 1 == d.cols() {
                if best.is_none_or(|b| acc < b) {
                    *best = Some(acc);
                }
                return;
            }
            if i + 1 < d.rows() {
                rec(d, i + 1, j, acc, best);
            }
            if j + 1 < d.cols() {
                rec(d, i, j + 1, acc, best);
            }
            if i + 1 < d.rows() && j + 1 < d.cols() {
                rec(d, i + 1, j + 1, acc, best);
            }
        }
        let mut best = None;
        rec(d, 0, 0, C::zero(), &mut best);
        best.unwrap()
    }

    fn path_cost<C: Copy + Zero + Add<Output = C>>(d: &CostMatrix<C>, p: &MonotonePath<C>) -> C {
        p.steps.iter().fold(C::zero(), |a, &(i, j)| a + d.get(i, j))
    }

    #[test]
    fn identity_like_matrix_is_diagonal() {
        let d = CostMatrix::from_rows(&[vec![0, 5, 5], vec![5, 0, 5], vec![5, 5, 0]]);
        let p = dp_align(&d).unwrap();
        assert_eq!(p.steps, vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(p.total_cost, 0);
    }

    #[test]
    fn three_by_two_example() {
        let d = CostMatrix::from_rows(&[vec![0, 1], vec![1, 0], vec![2, 1]]);
        let p = dp_align(&d).unwrap();
        assert_eq!(p.steps, vec![(0, 0), (1, 1), (2, 1)]);
        assert_eq!(p.total_cost, 1);
    }

    #[test]
    fn single_cell() {
        let d = CostMatrix::from_rows(&[vec![2.5]]);
        let p = dp_align(&d).unwrap();
        assert_eq!(p.steps, vec![(0, 0)]);
        assert_eq!(p.total_cost, 2.5);
    }

    #[test]
    fn flat_matrix_prefers_diagonal_then_vertical() {
        let d = CostMatrix::from_rows(&[vec![0; 3], vec![0; 3], vec![0; 3], vec![0; 3]]);
        let p = dp_align(&d).unwrap();
        assert_eq!(p.steps, vec![(0, 0), (1, 0), (2, 1), (3, 2)]);
    }

    #[test]
    fn exact_rational_costs() {
        let r = |n: i64, d: i64| Ratio::new(n, d);
        let d = CostMatrix::from_rows(&[
            vec![r(1, 3), r(1, 7), r(5, 2)],
            vec![r(2, 9), r(1, 11), r(1, 5)],
        ]);
        let p = dp_align(&d).unwrap();
        assert_eq!(p.total_cost, brute_force(&d));
        assert_eq!(p.total_cost, path_cost(&d, &p));
    }

    proptest! {
        #[test]
        fn matches_exhaustive_oracle(
            rows in 1usize..=6, cols in 1usize..=6,
            vals in proptest::collection::vec(0u32..1000, 36),
        ) {
            let d = CostMatrix::from_fn(rows, cols, |i, j| vals[i * 6 + j] as f64 / 7.0);
            let p = dp_align(&d).unwrap();
            prop_assert!(p.is_valid(rows, cols));
            prop_assert_eq!(p.total_cost, brute_force(&d));
            prop_assert_eq!(p.total_cost, path_cost(&d, &p));
        }

        #[test]
        fn path_invariant_under_positive_scaling(
            rows in 1usize..=7, cols in 1usize..=7,
            vals in proptest::collection::vec(0i64..50, 49),
            scale in 1i64..20,
        ) {
            let d = CostMatrix::from_fn(rows, cols, |i, j| vals[i * 7 + j]);
            let ds = CostMatrix::from_fn(rows, cols, |i, j| vals[i * 7 + j] * scale);
            let p = dp_align(&d).unwrap();
            let ps = dp_align(&ds).unwrap();
            prop_assert_eq!(&p.steps, &ps.steps);
            prop_assert_eq!(p.total_cost * scale, ps.total_cost);
        }
    }
}
