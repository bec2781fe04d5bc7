//! Incremental Gaussian elimination: a reduced row-echelon accumulator with an
//! augmented column, generic over the scalar type.
//!
//! Each inserted column is reduced against the current basis; the residual's
//! entries are compared against the column's own magnitude using the scalar's
//! pivot tolerance (exact comparison for rationals). The augmented value is
//! carried through the same row operations, which is what lets the span
//! learner read off a payoff for any column that lands in the span.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Row<T> {
    entries: Vec<T>,
    aug: T,
    pivot: usize,
}

/// Outcome of reducing a column against the basis.
#[derive(Debug, Clone)]
pub struct Reduction<T> {
    pub residual: Vec<T>,
    pub aug: T,
    pub in_span: bool,
    /// Largest magnitude of the incoming column, the reference for tolerance.
    pub scale: T,
}

/// Reduced row-echelon basis accumulated one column at a time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rref<T> {
    dim: usize,
    rows: Vec<Row<T>>,
}

impl<T: Scalar> Rref<T> {
    pub fn new(dim: usize) -> Self {
        Self { dim, rows: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Reduces `column` against the basis, tracking `aug` through the same
    /// operations. For a column in the span, `aug` ends up as the linear
    /// combination of the basis rows' augmented values.
    pub fn reduce(&self, column: &[T], aug: T) -> Reduction<T> {
        assert_eq!(column.len(), self.dim, "column dimension mismatch");
        let mut scale = T::zero();
        for e in column {
            let a = e.abs();
            if a > scale {
                scale = a;
            }
        }
        let mut residual = column.to_vec();
        let mut combo = T::zero();
        for row in &self.rows {
            let c = residual[row.pivot].clone();
            if c.is_zero() {
                continue;
            }
            for (r, b) in residual.iter_mut().zip(&row.entries) {
                if !b.is_zero() {
                    *r = r.clone() - c.clone() * b.clone();
                }
            }
            combo = combo + c.clone() * row.aug.clone();
        }
        let in_span = residual.iter().all(|e| e.is_negligible(&scale));
        Reduction { residual, aug: aug - combo, in_span, scale }
    }

    /// Inserts a column with its augmented value. Returns `false` (and leaves
    /// the basis untouched) when the column is already in the span.
    pub fn insert(&mut self, column: &[T], aug: T) -> bool {
        let red = self.reduce(column, aug);
        self.insert_reduction(red)
    }

    /// Inserts a previously computed reduction, avoiding a second pass.
    pub fn insert_reduction(&mut self, red: Reduction<T>) -> bool {
        if red.in_span {
            return false;
        }
        let Reduction { mut residual, aug, scale, .. } = red;
        // Snap noise below tolerance to exact zero before normalizing.
        for e in residual.iter_mut() {
            if e.is_negligible(&scale) {
                *e = T::zero();
            }
        }
        let pivot = residual
            .iter()
            .position(|e| !e.is_zero())
            .expect("non-span residual must have a pivot");
        let pv = residual[pivot].clone();
        for e in residual.iter_mut() {
            if !e.is_zero() {
                *e = e.clone() / pv.clone();
            }
        }
        let aug = aug / pv;
        // Keep the basis reduced: clear the new pivot from existing rows.
        for row in self.rows.iter_mut() {
            let c = row.entries[pivot].clone();
            if c.is_zero() {
                continue;
            }
            for (r, b) in row.entries.iter_mut().zip(&residual) {
                if !b.is_zero() {
                    *r = r.clone() - c.clone() * b.clone();
                }
            }
            row.aug = row.aug.clone() - c * aug.clone();
        }
        let pos = self.rows.partition_point(|r| r.pivot < pivot);
        self.rows.insert(pos, Row { entries: residual, aug, pivot });
        true
    }

    /// Pivot positions of the basis, ascending.
    pub fn pivots(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.pivot).collect()
    }

    /// Basis rows with their augmented values, for serialization.
    pub fn rows(&self) -> impl Iterator<Item = (&[T], &T, usize)> + '_ {
        self.rows.iter().map(|r| (r.entries.as_slice(), &r.aug, r.pivot))
    }

    /// Rebuilds a basis from serialized rows. Rows must come from [`Self::rows`].
    pub fn from_rows(dim: usize, rows: Vec<(Vec<T>, T, usize)>) -> Self {
        let rows = rows
            .into_iter()
            .map(|(entries, aug, pivot)| {
                assert_eq!(entries.len(), dim);
                Row { entries, aug, pivot }
            })
            .collect();
        Self { dim, rows }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use num_traits::FromPrimitive;

    #[test]
    fn rank_of_independent_columns() {
        let mut r = Rref::<f64>::new(3);
        assert!(r.insert(&[1.0, 0.0, 1.0], 2.0));
        assert!(r.insert(&[0.0, 1.0, 1.0], 3.0));
        assert!(!r.insert(&[1.0, 1.0, 2.0], 5.0));
        assert_eq!(r.rank(), 2);
    }

    #[test]
    fn augmented_value_tracks_combination() {
        let mut r = Rref::<f64>::new(3);
        r.insert(&[1.0, 1.0, 0.0], 4.0);
        r.insert(&[0.0, 1.0, 1.0], 6.0);
        // (1,2,1) = 1*(1,1,0) + 1*(0,1,1) -> aug residual 10 - 10 = 0
        let red = r.reduce(&[1.0, 2.0, 1.0], 10.0);
        assert!(red.in_span);
        assert!(red.aug.abs() < 1e-12);
    }

    #[test]
    fn exact_rational_reduction() {
        let q = |v: f64| BigRational::from_f64(v).unwrap();
        let mut r = Rref::<BigRational>::new(2);
        assert!(r.insert(&[q(1.0), q(1.0)], q(1.0)));
        assert!(r.insert(&[q(1.0), q(-1.0)], q(0.0)));
        let red = r.reduce(&[q(2.0), q(0.0)], q(1.0));
        assert!(red.in_span);
        assert_eq!(red.aug, q(0.0));
        assert_eq!(r.rank(), 2);
    }
}
