//! Clamped B-spline bases, design matrices and multidimensional splines.
//!
//! A spline with `n` state dimensions and `ℓ` basis functions is stored as an
//! `n × ℓ` [`ControlPointGrid`]; row `i` holds the coefficients of dimension
//! `i`. Evaluating the spline at `t` is a dot product of every row with the
//! basis vector at `t`, which is the block-diagonal product in compact form.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Non-decreasing knot sequence with `degree + 1` copies of each endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
}

impl KnotVector {
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Parameter("degree must be positive".into()));
        }
        if knots.len() < 2 * (degree + 1) {
            return Err(Error::Parameter(format!(
                "{} knots cannot hold a clamped degree-{degree} basis",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::Parameter("knots must be finite".into()));
        }
        if knots.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Parameter("knots must be non-decreasing".into()));
        }
        let a = knots[0];
        let b = knots[knots.len() - 1];
        if a >= b {
            return Err(Error::Parameter(format!("empty domain [{a}, {b}]")));
        }
        let head = &knots[..=degree];
        let tail = &knots[knots.len() - degree - 1..];
        if head.iter().any(|&k| k != a) || tail.iter().any(|&k| k != b) {
            return Err(Error::Parameter(format!(
                "knot vector is not clamped with multiplicity {}",
                degree + 1
            )));
        }
        // Interior knots may repeat at most `degree` times and must stay inside the domain.
        let interior = &knots[degree + 1..knots.len() - degree - 1];
        if interior.iter().any(|&k| k <= a || k >= b) {
            return Err(Error::Parameter("interior knots must lie strictly inside the domain".into()));
        }
        Ok(Self { knots, degree })
    }

    /// `count` basis functions of the given degree on `[start, end]`, with
    /// interior knots equispaced.
    pub fn clamped_uniform(count: usize, degree: usize, start: f64, end: f64) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Parameter("degree must be positive".into()));
        }
        if count < degree + 1 {
            return Err(Error::Parameter(format!(
                "need at least {} basis functions for degree {degree}, got {count}",
                degree + 1
            )));
        }
        if !(start < end) || !start.is_finite() || !end.is_finite() {
            return Err(Error::Parameter(format!("invalid domain [{start}, {end}]")));
        }
        let interior = count - degree - 1;
        let mut knots = Vec::with_capacity(count + degree + 1);
        knots.extend(std::iter::repeat_n(start, degree + 1));
        let width = end - start;
        for j in 1..=interior {
            knots.push(start + width * j as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat_n(end, degree + 1));
        Self::new(knots, degree)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Index `k` with `knots[k] <= t < knots[k + 1]`; the last span is closed at the right end.
    pub fn find_span(&self, t: f64) -> Result<usize> {
        let (a, b) = self.domain();
        if !(t >= a && t <= b) {
            return Err(Error::Domain { t, start: a, end: b });
        }
        let last = self.num_basis() - 1;
        if t >= self.knots[last + 1] {
            return Ok(last);
        }
        // First knot strictly greater than t, minus one.
        let upper = self.knots[self.degree..=last + 1].partition_point(|&k| k <= t) + self.degree;
        Ok(upper - 1)
    }
}

/// Serializable summary of a clamped-uniform basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub num_basis: usize,
    pub degree: usize,
    pub start: f64,
    pub end: f64,
}

impl BasisDescriptor {
    pub fn build(&self) -> Result<BSplineBasis> {
        BSplineBasis::clamped_uniform(self.num_basis, self.degree, self.start, self.end)
    }
}

/// The fixed trunk of the operator: `ℓ` B-spline basis functions over `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    knots: KnotVector,
}

impl BSplineBasis {
    pub fn new(knots: KnotVector) -> Self {
        Self { knots }
    }

    pub fn clamped_uniform(count: usize, degree: usize, start: f64, end: f64) -> Result<Self> {
        KnotVector::clamped_uniform(count, degree, start, end).map(Self::new)
    }

    pub fn knot_vector(&self) -> &KnotVector {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.num_basis()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn degree(&self) -> usize {
        self.knots.degree()
    }

    pub fn domain(&self) -> (f64, f64) {
        self.knots.domain()
    }

    pub fn descriptor(&self) -> BasisDescriptor {
        let (start, end) = self.domain();
        BasisDescriptor {
            num_basis: self.len(),
            degree: self.degree(),
            start,
            end,
        }
    }

    /// The `d + 1` possibly nonzero basis values at `t` and the index of the first one.
    ///
    /// Triangular de Boor scheme over the active span; repeated knots never
    /// produce a zero denominator because the span is non-degenerate.
    pub fn eval_active(&self, t: f64) -> Result<(usize, Vec<f64>)> {
        let span = self.knots.find_span(t)?;
        let p = self.degree();
        let u = self.knots.knots();
        let mut values = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        values[0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[span + 1 - j];
            right[j] = u[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        Ok((span - p, values))
    }

    /// All `ℓ` basis values at `t`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let (first, active) = self.eval_active(t)?;
        let mut out = vec![0.0; self.len()];
        out[first..first + active.len()].copy_from_slice(&active);
        Ok(out)
    }

    /// `N × ℓ` matrix whose row `j` is the basis at `times[j]`.
    pub fn design_matrix(&self, times: &[f64]) -> Result<DMatrix<f64>> {
        if times.len() < self.len() {
            return Err(Error::Underdetermined {
                samples: times.len(),
                unknowns: self.len(),
            });
        }
        let mut m = DMatrix::zeros(times.len(), self.len());
        for (row, &t) in times.iter().enumerate() {
            let (first, active) = self.eval_active(t)?;
            for (k, v) in active.into_iter().enumerate() {
                m[(row, first + k)] = v;
            }
        }
        Ok(m)
    }

    /// Spline value `s(t)`, one entry per state dimension.
    pub fn spline_eval(&self, cp: &ControlPointGrid, t: f64) -> Result<Vec<f64>> {
        self.check_grid(cp)?;
        let (first, active) = self.eval_active(t)?;
        Ok((0..cp.dims())
            .map(|i| {
                active
                    .iter()
                    .enumerate()
                    .map(|(k, b)| b * cp.values[(i, first + k)])
                    .sum()
            })
            .collect())
    }

    /// Spline values at every time; returns an `N × n` matrix.
    pub fn spline_eval_many(&self, cp: &ControlPointGrid, times: &[f64]) -> Result<DMatrix<f64>> {
        self.check_grid(cp)?;
        let mut out = DMatrix::zeros(times.len(), cp.dims());
        for (row, &t) in times.iter().enumerate() {
            let (first, active) = self.eval_active(t)?;
            for i in 0..cp.dims() {
                out[(row, i)] = active
                    .iter()
                    .enumerate()
                    .map(|(k, b)| b * cp.values[(i, first + k)])
                    .sum();
            }
        }
        Ok(out)
    }

    /// Euclidean norm of the basis vector at `t`; the operator 2-norm of the
    /// block-diagonal basis matrix.
    pub fn basis_norm(&self, t: f64) -> Result<f64> {
        let (_, active) = self.eval_active(t)?;
        Ok(active.iter().map(|b| b * b).sum::<f64>().sqrt())
    }

    fn check_grid(&self, cp: &ControlPointGrid) -> Result<()> {
        if cp.len() != self.len() {
            return Err(Error::Shape {
                expected: format!("{} control points per dimension", self.len()),
                found: cp.len().to_string(),
            });
        }
        Ok(())
    }
}

/// `n × ℓ` spline coefficients, row `i` belonging to state dimension `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct ControlPointGrid {
    values: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    rows: Vec<Vec<f64>>,
}

impl TryFrom<GridRepr> for ControlPointGrid {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        Self::from_rows(&r.rows)
    }
}

impl From<ControlPointGrid> for GridRepr {
    fn from(g: ControlPointGrid) -> Self {
        GridRepr { rows: g.rows() }
    }
}

impl ControlPointGrid {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Shape {
                expected: "non-empty grid".into(),
                found: format!("{} x {}", values.nrows(), values.ncols()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("control point grid".into()));
        }
        Ok(Self { values })
    }

    pub fn zeros(dims: usize, len: usize) -> Self {
        Self {
            values: DMatrix::zeros(dims, len),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let len = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != len) {
            return Err(Error::Shape {
                expected: format!("rows of length {len}"),
                found: "ragged rows".into(),
            });
        }
        Self::new(DMatrix::from_fn(rows.len(), len, |i, k| rows[i][k]))
    }

    /// Inverse of [`ControlPointGrid::flatten`]: `flat[i * len + k]` is point `k` of dimension `i`.
    pub fn from_flat(dims: usize, len: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != dims * len {
            return Err(Error::Shape {
                expected: format!("{} = {dims} x {len} values", dims * len),
                found: flat.len().to_string(),
            });
        }
        Self::new(DMatrix::from_row_slice(dims, len, flat))
    }

    pub fn dims(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn get(&self, dim: usize, k: usize) -> f64 {
        self.values[(dim, k)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    /// Control point `k` across all dimensions.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values.column(k).iter().copied().collect()
    }

    /// Row-major flattening by state dimension.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.transpose().as_slice().to_vec()
    }

    /// Applies `f` to every control column (a point in state space).
    pub fn map_columns(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut out = self.values.clone();
        for k in 0..self.len() {
            let mapped = f(&self.column(k));
            if mapped.len() != self.dims() {
                return Err(Error::Shape {
                    expected: self.dims().to_string(),
                    found: mapped.len().to_string(),
                });
            }
            for (i, v) in mapped.into_iter().enumerate() {
                out[(i, k)] = v;
            }
        }
        Self::new(out)
    }

    /// Euclidean distance between the flattened grids.
    pub fn distance(&self, other: &Self) -> f64 {
        (&self.values - &other.values).norm()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for row in self.values.row_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parameter(format!("bad control point {s:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }
}

/// Axis-aligned interval hull of a control point grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullEnvelope {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl HullEnvelope {
    pub fn of(cp: &ControlPointGrid) -> Self {
        let (lower, upper) = cp
            .values
            .row_iter()
            .map(|r| (r.min(), r.max()))
            .unzip();
        Self { lower, upper }
    }

    /// Largest distance by which `point` leaves the envelope in any dimension (0 if inside).
    pub fn violation(&self, point: &[f64]) -> f64 {
        point
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&x, (&lo, &hi))| (lo - x).max(x - hi).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, point: &[f64], tol: f64) -> bool {
        self.violation(point) <= tol
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }
}

/// Per-dimension min/max of the control points; contains the spline over its whole domain.
pub fn hull_envelope(cp: &ControlPointGrid) -> HullEnvelope {
    HullEnvelope::of(cp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Literal Cox-de Boor recursion with 0/0 := 0, closing the last nonempty span at b.
    fn cox_de_boor(knots: &[f64], i: usize, d: usize, t: f64) -> f64 {
        if d == 0 {
            let b = knots[knots.len() - 1];
            let last_nonempty = knots.iter().rposition(|&k| k < b).unwrap();
            let inside = knots[i] <= t && t < knots[i + 1];
            let closed = i == last_nonempty && t == b;
            return if inside || closed { 1.0 } else { 0.0 };
        }
        let mut out = 0.0;
        let den1 = knots[i + d] - knots[i];
        if den1 != 0.0 {
            out += (t - knots[i]) / den1 * cox_de_boor(knots, i, d - 1, t);
        }
        let den2 = knots[i + d + 1] - knots[i + 1];
        if den2 != 0.0 {
            out += (knots[i + d + 1] - t) / den2 * cox_de_boor(knots, i + 1, d - 1, t);
        }
        out
    }

    fn binomial(n: usize, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
    }

    fn bernstein(d: usize, i: usize, t: f64) -> f64 {
        binomial(d, i) * t.powi(i as i32) * (1.0 - t).powi((d - i) as i32)
    }

    #[test]
    fn knot_examples() {
        let k = KnotVector::clamped_uniform(4, 3, 0.0, 1.0).unwrap();
        assert_eq!(k.knots(), &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let k = KnotVector::clamped_uniform(5, 3, 0.0, 1.0).unwrap();
        assert_eq!(k.knots(), &[0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0]);
        let k = KnotVector::clamped_uniform(50, 3, 0.0, 2.5).unwrap();
        assert_eq!(k.knots().len(), 54);
        let interior = &k.knots()[4..50];
        assert_eq!(interior.len(), 46);
        let step = 2.5 / 47.0;
        for (j, &x) in interior.iter().enumerate() {
            assert_abs_diff_eq!(x, step * (j + 1) as f64, epsilon = 1e-14);
        }
    }

    #[test]
    fn knot_errors() {
        assert!(KnotVector::clamped_uniform(3, 3, 0.0, 1.0).is_err());
        assert!(KnotVector::clamped_uniform(5, 3, 1.0, 1.0).is_err());
        assert!(KnotVector::clamped_uniform(5, 3, 2.0, 1.0).is_err());
        assert!(KnotVector::new(vec![0.0, 0.0, 0.5, 1.0, 1.0, 1.0], 2).is_err());
        assert!(KnotVector::new(vec![0.0, 0.0, 0.0, 0.7, 0.3, 1.0, 1.0, 1.0], 2).is_err());
    }

    #[test]
    fn bezier_midpoint_values() {
        let basis = BSplineBasis::clamped_uniform(4, 3, 0.0, 1.0).unwrap();
        let b = basis.eval(0.5).unwrap();
        let expected = [0.125, 0.375, 0.375, 0.125];
        for (x, e) in b.iter().zip(expected) {
            assert_abs_diff_eq!(*x, e, epsilon = 1e-15);
        }
        assert_eq!(basis.eval(0.0).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(basis.eval(1.0).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn eval_rejects_out_of_domain() {
        let basis = BSplineBasis::clamped_uniform(6, 3, 0.0, 2.0).unwrap();
        assert!(matches!(basis.eval(-1e-12), Err(Error::Domain { .. })));
        assert!(matches!(basis.eval(2.0 + 1e-12), Err(Error::Domain { .. })));
        assert!(basis.eval(f64::NAN).is_err());
    }

    #[test]
    fn de_boor_matches_literal_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(count, degree) in &[(4, 3), (7, 3), (12, 2), (50, 3), (9, 5), (5, 1)] {
            let basis = BSplineBasis::clamped_uniform(count, degree, 0.0, 2.5).unwrap();
            let knots = basis.knot_vector().knots().to_vec();
            let mut ts: Vec<f64> = (0..=200).map(|j| 2.5 * j as f64 / 200.0).collect();
            ts.extend((0..200).map(|_| rng.random_range(0.0..=2.5)));
            for t in ts {
                let fast = basis.eval(t).unwrap();
                for (i, &v) in fast.iter().enumerate() {
                    let slow = cox_de_boor(&knots, i, degree, t);
                    assert!((v - slow).abs() <= 1e-13, "i={i} t={t}: {v} vs {slow}");
                }
            }
        }
    }

    #[test]
    fn bernstein_equivalence() {
        for d in 1..=5 {
            let basis = BSplineBasis::clamped_uniform(d + 1, d, 0.0, 1.0).unwrap();
            for j in 0..=1000 {
                let t = j as f64 / 1000.0;
                let b = basis.eval(t).unwrap();
                for (i, v) in b.iter().enumerate() {
                    assert!((v - bernstein(d, i, t)).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn local_support() {
        let basis = BSplineBasis::clamped_uniform(20, 3, 0.0, 1.0).unwrap();
        let knots = basis.knot_vector().knots();
        for span in 3..20 {
            let t = 0.5 * (knots[span] + knots[span + 1]);
            let b = basis.eval(t).unwrap();
            for (i, v) in b.iter().enumerate() {
                if i + 3 < span || i > span {
                    assert_eq!(*v, 0.0);
                }
            }
            assert!(b.iter().filter(|v| **v != 0.0).count() <= 4);
        }
    }

    #[test]
    fn design_matrix_examples() {
        let basis = BSplineBasis::clamped_uniform(4, 3, 0.0, 1.0).unwrap();
        let m = basis.design_matrix(&[0.0, 0.5, 1.0, 0.0]).unwrap();
        let expected = [
            [1.0, 0.0, 0.0, 0.0],
            [0.125, 0.375, 0.375, 0.125],
            [0.0, 0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0, 0.0],
        ];
        for r in 0..4 {
            for c in 0..4 {
                assert_abs_diff_eq!(m[(r, c)], expected[r][c], epsilon = 1e-15);
            }
        }
        assert!(matches!(
            basis.design_matrix(&[0.0, 0.5, 1.0]),
            Err(Error::Underdetermined { .. })
        ));
        let repeated = basis.design_matrix(&[0.0; 6]).unwrap();
        for r in 0..6 {
            assert_eq!(repeated.row(r).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn design_matrix_full_rank_at_default_resolution() {
        let basis = BSplineBasis::clamped_uniform(50, 3, 0.0, 2.5).unwrap();
        let times: Vec<f64> = (0..251).map(|j| j as f64 * 0.01).collect();
        let m = basis.design_matrix(&times).unwrap();
        let sv = m.svd(false, false).singular_values;
        let max = sv.max();
        let rank = sv.iter().filter(|s| **s > max * 1e-12).count();
        assert_eq!(rank, 50);
    }

    #[test]
    fn spline_eval_examples() {
        let basis = BSplineBasis::clamped_uniform(4, 3, 0.0, 1.0).unwrap();
        let cp = ControlPointGrid::from_rows(&[vec![0.0, 1.0, 1.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(basis.spline_eval(&cp, 0.5).unwrap()[0], 0.75, epsilon = 1e-15);

        let cp = ControlPointGrid::from_rows(&[vec![2.0; 4], vec![-3.5; 4]]).unwrap();
        for j in 0..=10 {
            let s = basis.spline_eval(&cp, j as f64 / 10.0).unwrap();
            assert_abs_diff_eq!(s[0], 2.0, epsilon = 1e-14);
            assert_abs_diff_eq!(s[1], -3.5, epsilon = 1e-14);
        }

        let wrong = ControlPointGrid::zeros(2, 5);
        assert!(matches!(basis.spline_eval(&wrong, 0.1), Err(Error::Shape { .. })));
    }

    #[test]
    fn endpoint_interpolation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let basis = BSplineBasis::clamped_uniform(50, 3, 0.0, 2.5).unwrap();
        let flat: Vec<f64> = (0..600).map(|_| rng.random_range(-5.0..5.0)).collect();
        let cp = ControlPointGrid::from_flat(12, 50, &flat).unwrap();
        let first = basis.spline_eval(&cp, 0.0).unwrap();
        let last = basis.spline_eval(&cp, 2.5).unwrap();
        for i in 0..12 {
            assert!((first[i] - cp.get(i, 0)).abs() <= 1e-14);
            assert!((last[i] - cp.get(i, 49)).abs() <= 1e-14);
        }
    }

    #[test]
    fn smooth_across_interior_knots() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let basis = BSplineBasis::clamped_uniform(10, 3, 0.0, 1.0).unwrap();
        let row: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cp = ControlPointGrid::from_rows(&[row]).unwrap();
        let s = |t: f64| basis.spline_eval(&cp, t).unwrap()[0];
        let h = 1e-3;
        let interior = basis.knot_vector().knots()[4..10].to_vec();
        for knot in interior {
            // Four-point one-sided stencils are exact on each cubic piece.
            let l: Vec<f64> = (0..4).map(|j| s(knot - j as f64 * h)).collect();
            let r: Vec<f64> = (0..4).map(|j| s(knot + j as f64 * h)).collect();
            let d1_left = (11.0 * l[0] - 18.0 * l[1] + 9.0 * l[2] - 2.0 * l[3]) / (6.0 * h);
            let d1_right = (-11.0 * r[0] + 18.0 * r[1] - 9.0 * r[2] + 2.0 * r[3]) / (6.0 * h);
            let d2_left = (2.0 * l[0] - 5.0 * l[1] + 4.0 * l[2] - l[3]) / (h * h);
            let d2_right = (2.0 * r[0] - 5.0 * r[1] + 4.0 * r[2] - r[3]) / (h * h);
            let scale1 = d1_left.abs().max(d1_right.abs()).max(1.0);
            let scale2 = d2_left.abs().max(d2_right.abs()).max(1.0);
            assert!((d1_left - d1_right).abs() / scale1 <= 1e-5, "first derivative jump at {knot}");
            assert!((d2_left - d2_right).abs() / scale2 <= 1e-5, "second derivative jump at {knot}");
        }
    }

    #[test]
    fn hull_examples() {
        let cp = ControlPointGrid::from_rows(&[vec![0.0, 1.0, 1.0, 0.0], vec![4.0; 4]]).unwrap();
        let env = hull_envelope(&cp);
        assert_eq!(env.lower, vec![0.0, 4.0]);
        assert_eq!(env.upper, vec![1.0, 4.0]);
        assert_eq!(env.widths(), vec![1.0, 0.0]);
        assert!(env.contains(&[0.5, 4.0], 0.0));
        assert_abs_diff_eq!(env.violation(&[1.5, 3.0]), 1.0);
    }

    #[test]
    fn csv_round_trip() {
        let cp = ControlPointGrid::from_rows(&[
            vec![0.1, 1.0 / 3.0, -2.5e-17],
            vec![f64::MAX, -f64::MIN_POSITIVE, 7.0],
        ])
        .unwrap();
        let mut buf = Vec::new();
        cp.write_csv(&mut buf).unwrap();
        let back = ControlPointGrid::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, cp);
    }

    #[test]
    fn flatten_layout() {
        let cp = ControlPointGrid::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(cp.flatten(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(ControlPointGrid::from_flat(2, 3, &cp.flatten()).unwrap(), cp);
        assert_eq!(cp.column(1), vec![2.0, 5.0]);
    }
}
