//! One-dimensional finite-difference stencils on a uniform line of nodes.
//!
//! Centered second-order stencils in the interior, second-order one-sided
//! stencils at the ends. Lines too short for a stencil fall back to the
//! highest order they support.

use arrayvec::ArrayVec;

use crate::scalar::Scalar;

/// Sparse stencil row: `(line index, coefficient)` pairs.
pub type StencilRow<T> = ArrayVec<(usize, T), 4>;

/// Derivative order of a stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deriv {
    First,
    Second,
}

/// Row of the first-derivative operator at position `j` of a line of `len` nodes.
pub fn d1_row<T: Scalar>(j: usize, len: usize, h: T) -> StencilRow<T> {
    let mut row = StencilRow::new();
    let half = T::lit(0.5) / h;
    match len {
        0 | 1 => {}
        2 => {
            row.push((0, -T::one() / h));
            row.push((1, T::one() / h));
        }
        _ if j == 0 => {
            row.push((0, -T::lit(3.0) * half));
            row.push((1, T::lit(4.0) * half));
            row.push((2, -half));
        }
        _ if j + 1 == len => {
            row.push((len - 3, half));
            row.push((len - 2, -T::lit(4.0) * half));
            row.push((len - 1, T::lit(3.0) * half));
        }
        _ => {
            row.push((j - 1, -half));
            row.push((j + 1, half));
        }
    }
    row
}

/// Row of the second-derivative operator at position `j` of a line of `len` nodes.
pub fn d2_row<T: Scalar>(j: usize, len: usize, h: T) -> StencilRow<T> {
    let mut row = StencilRow::new();
    let inv = T::one() / (h * h);
    let two = T::lit(2.0);
    match len {
        0..=2 => {}
        3 => {
            row.push((0, inv));
            row.push((1, -two * inv));
            row.push((2, inv));
        }
        _ if j == 0 => {
            row.push((0, two * inv));
            row.push((1, -T::lit(5.0) * inv));
            row.push((2, T::lit(4.0) * inv));
            row.push((3, -inv));
        }
        _ if j + 1 == len => {
            row.push((len - 4, -inv));
            row.push((len - 3, T::lit(4.0) * inv));
            row.push((len - 2, -T::lit(5.0) * inv));
            row.push((len - 1, two * inv));
        }
        _ => {
            row.push((j - 1, inv));
            row.push((j, -two * inv));
            row.push((j + 1, inv));
        }
    }
    row
}

pub fn row<T: Scalar>(kind: Deriv, j: usize, len: usize, h: T) -> StencilRow<T> {
    match kind {
        Deriv::First => d1_row(j, len, h),
        Deriv::Second => d2_row(j, len, h),
    }
}

/// Applies the stencil along a strided line: `out[j] = sum c * input[line j']`.
pub fn apply_line<T: Scalar>(kind: Deriv, input: &[T], h: T) -> Vec<T> {
    let len = input.len();
    (0..len)
        .map(|j| row(kind, j, len, h).iter().fold(T::zero(), |acc, &(l, c)| acc + c * input[l]))
        .collect()
}

/// Outward normal derivative at a boundary node from the node and its two
/// inward neighbours: `(3 f_0 - 4 f_1 + f_2) / (2h)`.
pub fn outward_normal_coeffs<T: Scalar>(h: T) -> [T; 3] {
    let half = T::lit(0.5) / h;
    [T::lit(3.0) * half, -T::lit(4.0) * half, half]
}

/// Composite trapezoidal weights on a line of `len` nodes with spacing `h`.
/// A single node gets unit weight (point measure).
pub fn trapezoid_weights<T: Scalar>(len: usize, h: T) -> Vec<T> {
    match len {
        0 => Vec::new(),
        1 => vec![T::one()],
        _ => {
            let mut w = vec![h; len];
            w[0] = h / T::lit(2.0);
            w[len - 1] = h / T::lit(2.0);
            w
        }
    }
}
