//! Differential forms on an open subset of `R^d` with symbolic coefficients.
//!
//! A p-form stores one [`Expr`] per strictly increasing multi-index
//! `i1 < ... < ip` (zero-based internally). Missing entries are zero.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::{coordinate_names, Expr};

pub type MultiIndex = Vec<usize>;

/// Numeric coefficients of a form at a point.
pub type CoefficientTable = BTreeMap<MultiIndex, f64>;

/// Sign of the permutation sorting `indices`, or `None` if an index repeats.
pub fn sort_sign(indices: &[usize]) -> Option<(f64, MultiIndex)> {
    let mut inversions = 0usize;
    for a in 0..indices.len() {
        for b in a + 1..indices.len() {
            match indices[a].cmp(&indices[b]) {
                std::cmp::Ordering::Equal => return None,
                std::cmp::Ordering::Greater => inversions += 1,
                std::cmp::Ordering::Less => {}
            }
        }
    }
    let mut sorted = indices.to_vec();
    sorted.sort_unstable();
    Some((if inversions % 2 == 0 { 1.0 } else { -1.0 }, sorted))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialForm {
    dim: usize,
    degree: usize,
    coeffs: BTreeMap<MultiIndex, Expr>,
}

impl DifferentialForm {
    pub fn zero(dim: usize, degree: usize) -> Self {
        Self {
            dim,
            degree,
            coeffs: BTreeMap::new(),
        }
    }

    /// The 0-form `f`.
    pub fn scalar(dim: usize, f: Expr) -> Self {
        let mut form = Self::zero(dim, 0);
        form.insert(Vec::new(), f);
        form
    }

    /// The unit 0-form.
    pub fn unit(dim: usize) -> Self {
        Self::scalar(dim, Expr::one())
    }

    /// The coordinate differential `dx_i` (zero-based `i`).
    pub fn coordinate(dim: usize, i: usize) -> Self {
        let mut form = Self::zero(dim, 1);
        form.insert(vec![i], Expr::one());
        form
    }

    /// Builds a form from (possibly unsorted) index lists, folding signs.
    pub fn from_terms<I>(dim: usize, degree: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, Expr)>,
    {
        if degree > dim {
            return Err(Error::DegreeMismatch(format!(
                "degree {degree} exceeds chart dimension {dim}"
            )));
        }
        let mut form = Self::zero(dim, degree);
        for (index, coeff) in terms {
            if index.len() != degree || index.iter().any(|&i| i >= dim) {
                return Err(Error::InvalidIndex { index, dim });
            }
            let Some((sign, sorted)) = sort_sign(&index) else {
                continue;
            };
            form.accumulate(sorted, Expr::mul(Expr::Const(sign), coeff));
        }
        Ok(form)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Expr)> {
        self.coeffs.iter()
    }

    pub fn coefficient(&self, index: &[usize]) -> Expr {
        self.coeffs.get(index).cloned().unwrap_or_default()
    }

    /// The stored coefficient, `None` when it is zero.
    pub fn coefficient_ref(&self, index: &[usize]) -> Option<&Expr> {
        self.coeffs.get(index)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// True for the 0-form with constant coefficient 1.
    pub fn is_unit(&self) -> bool {
        self.degree == 0 && self.coeffs.get(&Vec::new()).is_some_and(Expr::is_one)
    }

    fn insert(&mut self, index: MultiIndex, coeff: Expr) {
        if coeff.is_zero() {
            self.coeffs.remove(&index);
        } else {
            self.coeffs.insert(index, coeff);
        }
    }

    fn accumulate(&mut self, index: MultiIndex, coeff: Expr) {
        let sum = match self.coeffs.remove(&index) {
            Some(prev) => Expr::add(prev, coeff),
            None => coeff,
        };
        self.insert(index, sum);
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let mut out = self.clone();
        for (idx, c) in &other.coeffs {
            out.accumulate(idx.clone(), c.clone());
        }
        Ok(out)
    }

    /// Multiplies every coefficient by the function `f`.
    pub fn scale(&self, f: &Expr) -> Self {
        let mut out = Self::zero(self.dim, self.degree);
        for (idx, c) in &self.coeffs {
            out.insert(idx.clone(), Expr::mul(f.clone(), c.clone()));
        }
        out
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "forms live on charts of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        if self.degree != other.degree {
            return Err(Error::DegreeMismatch(format!(
                "cannot add forms of degree {} and {}",
                self.degree, other.degree
            )));
        }
        Ok(())
    }

    pub fn wedge(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "wedge of forms on charts of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        let degree = self.degree + other.degree;
        let mut out = Self::zero(self.dim, degree);
        if degree > self.dim {
            return Ok(out);
        }
        for (a, ca) in &self.coeffs {
            for (b, cb) in &other.coeffs {
                let joined: Vec<usize> = a.iter().chain(b).copied().collect();
                if let Some((sign, sorted)) = sort_sign(&joined) {
                    let c = Expr::mul(ca.clone(), cb.clone());
                    out.accumulate(sorted, Expr::mul(Expr::Const(sign), c));
                }
            }
        }
        Ok(out)
    }

    pub fn exterior_derivative(&self) -> Self {
        let mut out = Self::zero(self.dim, self.degree + 1);
        if self.degree >= self.dim {
            return out;
        }
        for (idx, c) in &self.coeffs {
            for a in 0..self.dim {
                if idx.contains(&a) {
                    continue;
                }
                let dc = c.derivative(a);
                if dc.is_zero() {
                    continue;
                }
                // dx_a moves past the indices smaller than a.
                let shift = idx.iter().filter(|&&i| i < a).count();
                let sign = if shift % 2 == 0 { 1.0 } else { -1.0 };
                let mut sorted = idx.clone();
                sorted.insert(shift, a);
                out.accumulate(sorted, Expr::mul(Expr::Const(sign), dc));
            }
        }
        out
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<CoefficientTable> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "point has {} coordinates, chart has {}",
                point.len(),
                self.dim
            )));
        }
        let mut table = CoefficientTable::new();
        for (idx, c) in &self.coeffs {
            table.insert(idx.clone(), c.eval(point)?);
        }
        Ok(table)
    }

    /// Composes every coefficient with `subs` (a map into this chart).
    pub fn substitute(&self, subs: &[Expr]) -> Self {
        let mut out = Self::zero(self.dim, self.degree);
        for (idx, c) in &self.coeffs {
            out.insert(idx.clone(), c.substitute(subs));
        }
        out
    }

    /// Renders with coordinate names `prefix1..prefixd`.
    pub fn render(&self, prefix: &str) -> String {
        let names = coordinate_names(prefix, self.dim);
        if self.coeffs.is_empty() {
            return "0".into();
        }
        self.coeffs
            .iter()
            .map(|(idx, c)| {
                let coeff = c.display(&names).to_string();
                if idx.is_empty() {
                    coeff
                } else {
                    let diffs: Vec<String> =
                        idx.iter().map(|i| format!("d{prefix}{}", i + 1)).collect();
                    format!("({coeff})*{}", diffs.join("^"))
                }
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

impl fmt::Display for DifferentialForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render("x"))
    }
}

/// Axis-aligned box from which sample points are drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SampleBox {
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| lo + (hi - lo) * rng.gen::<f64>())
            .collect()
    }
}

/// One generator `sum_{i<j} coef * [X_i, X_j]` of the relation ideal.
#[derive(Debug, Clone, PartialEq)]
pub struct LieRelation {
    /// Zero-based index of the 2-form `v_k` this relation belongs to.
    pub basis_index: usize,
    /// `(i, j, coefficient)` with `i < j`, zero-based.
    pub brackets: Vec<(usize, usize, f64)>,
}

impl LieRelation {
    /// Expansion in the free associative algebra: word -> coefficient.
    pub fn expand(&self) -> BTreeMap<Vec<usize>, f64> {
        let mut out = BTreeMap::new();
        for &(i, j, c) in &self.brackets {
            *out.entry(vec![i, j]).or_insert(0.0) += c;
            *out.entry(vec![j, i]).or_insert(0.0) -= c;
        }
        out.retain(|_, c| *c != 0.0);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisDecomposition {
    /// `c[i][j][k]` with `w_i ^ w_j = sum_k c[i][j][k] v_k`.
    pub c: Vec<Vec<Vec<f64>>>,
    /// Largest pointwise residual of the least-squares fit.
    pub residual: f64,
    /// Largest |dw_i| seen on the samples.
    pub closedness: f64,
    pub relations: Vec<LieRelation>,
}

/// Fits constants `c_ijk` with `w_i ^ w_j = sum_k c_ijk v_k` by least squares
/// over `sample_count` uniform points in `region`.
pub fn express_in_basis(
    w: &[DifferentialForm],
    v: &[DifferentialForm],
    region: &SampleBox,
    sample_count: usize,
    tol: f64,
    seed: u64,
) -> Result<BasisDecomposition> {
    let dim = region.lower.len();
    if region.upper.len() != dim {
        return Err(Error::DimensionMismatch("sample box bounds".into()));
    }
    for form in w {
        if form.dim() != dim || form.degree() != 1 {
            return Err(Error::DegreeMismatch("W must contain 1-forms on the chart".into()));
        }
    }
    for form in v {
        if form.dim() != dim || form.degree() != 2 {
            return Err(Error::DegreeMismatch("V must contain 2-forms on the chart".into()));
        }
    }
    if sample_count == 0 {
        return Err(Error::Invalid("sample_count must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..sample_count).map(|_| region.sample(&mut rng)).collect();

    let derivatives: Vec<DifferentialForm> = w.iter().map(|f| f.exterior_derivative()).collect();
    let mut closedness: f64 = 0.0;
    for (i, dw) in derivatives.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for p in &points {
            for value in dw.evaluate(p)?.values() {
                worst = worst.max(value.abs());
            }
        }
        if worst > tol {
            return Err(Error::NotClosed {
                index: i + 1,
                magnitude: worst,
            });
        }
        closedness = closedness.max(worst);
    }

    let components: Vec<MultiIndex> = (0..dim)
        .flat_map(|a| (a + 1..dim).map(move |b| vec![a, b]))
        .collect();
    let rows = points.len() * components.len();
    let l = v.len();
    let mut design = DMatrix::<f64>::zeros(rows, l);
    for (p_idx, p) in points.iter().enumerate() {
        let mut local = DMatrix::<f64>::zeros(components.len(), l);
        for (k, vk) in v.iter().enumerate() {
            let table = vk.evaluate(p)?;
            for (c_idx, comp) in components.iter().enumerate() {
                let value = table.get(comp).copied().unwrap_or(0.0);
                local[(c_idx, k)] = value;
                design[(p_idx * components.len() + c_idx, k)] = value;
            }
        }
        if l > 0 {
            let sv = local.clone().svd(false, false).singular_values;
            let largest = sv.max();
            if sv.min() <= 1e-10 * largest.max(1.0) || l > components.len() {
                return Err(Error::DependentBasis);
            }
        }
    }

    let m = w.len();
    let svd = design.clone().svd(true, true);
    let mut c = vec![vec![vec![0.0; l]; m]; m];
    let mut residual: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            let wedge = w[i].wedge(&w[j])?;
            let mut rhs = DVector::<f64>::zeros(rows);
            for (p_idx, p) in points.iter().enumerate() {
                let table = wedge.evaluate(p)?;
                for (c_idx, comp) in components.iter().enumerate() {
                    rhs[p_idx * components.len() + c_idx] = table.get(comp).copied().unwrap_or(0.0);
                }
            }
            let coeffs = if l == 0 {
                DVector::zeros(0)
            } else {
                svd.solve(&rhs, 1e-12).map_err(|e| Error::Invalid(e.to_string()))?
            };
            let fitted = &design * &coeffs;
            residual = residual.max((fitted - &rhs).amax());
            for k in 0..l {
                let value = coeffs[k];
                c[i][j][k] = if value.abs() < 1e-13 { 0.0 } else { value };
            }
        }
    }
    if residual > tol {
        return Err(Error::BasisInsufficient { residual, tol });
    }

    let relations = (0..l)
        .map(|k| LieRelation {
            basis_index: k,
            brackets: (0..m)
                .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
                .filter_map(|(i, j)| {
                    let coef = c[i][j][k] - c[j][i][k];
                    (coef != 0.0).then_some((i, j, coef))
                })
                .collect(),
        })
        .collect();

    Ok(BasisDecomposition {
        c,
        residual,
        closedness,
        relations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    fn x(dim: usize) -> Vec<String> {
        coordinate_names("x", dim)
    }

    fn form(dim: usize, degree: usize, terms: &[(&[usize], &str)]) -> DifferentialForm {
        let names = x(dim);
        DifferentialForm::from_terms(
            dim,
            degree,
            terms
                .iter()
                .map(|(idx, src)| (idx.to_vec(), parse(src, &names).unwrap())),
        )
        .unwrap()
    }

    #[test]
    fn wedge_of_coordinates() {
        let dx1 = DifferentialForm::coordinate(2, 0);
        let dx2 = DifferentialForm::coordinate(2, 1);
        let a = dx1.wedge(&dx2).unwrap();
        assert_eq!(a.coefficient(&[0, 1]), Expr::one());
        assert!(dx1.wedge(&dx1).unwrap().is_zero());
        let b = dx2.wedge(&dx1).unwrap();
        assert_eq!(b.coefficient(&[0, 1]), Expr::Const(-1.0));
        assert_eq!(b.degree(), 2);
    }

    #[test]
    fn wedge_rejects_mismatched_charts() {
        let a = DifferentialForm::coordinate(2, 0);
        let b = DifferentialForm::coordinate(3, 0);
        assert!(matches!(a.wedge(&b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn over_degree_wedge_is_zero() {
        let a = form(2, 2, &[(&[0, 1], "1")]);
        let b = DifferentialForm::coordinate(2, 0);
        let w = a.wedge(&b).unwrap();
        assert!(w.is_zero());
        assert_eq!(w.degree(), 3);
    }

    #[test]
    fn exterior_derivative_examples() {
        let a = form(2, 1, &[(&[1], "x1")]);
        let da = a.exterior_derivative();
        assert_eq!(da.coefficient(&[0, 1]), Expr::one());

        let dx1 = DifferentialForm::coordinate(2, 0);
        assert!(dx1.exterior_derivative().is_zero());

        // d(x1 x2 dx1) = x1 dx2^dx1 = -x1 dx1^dx2
        let b = form(2, 1, &[(&[0], "x1*x2")]);
        let db = b.exterior_derivative();
        for p in [[0.3, 0.9], [2.0, -1.0]] {
            let v = db.evaluate(&p).unwrap()[&vec![0, 1]];
            assert!((v + p[0]).abs() < 1e-15);
            // finite-difference check of the single component -d/dx2 (x1 x2)
            let h = 1e-6;
            let f = |x2: f64| p[0] * x2;
            let fd = (f(p[1] + h) - f(p[1] - h)) / (2.0 * h);
            assert!((v + fd).abs() < 1e-8);
        }
    }

    #[test]
    fn evaluation() {
        let a = form(2, 1, &[(&[1], "x1")]);
        assert_eq!(a.evaluate(&[3.0, 7.0]).unwrap(), BTreeMap::from([(vec![1], 3.0)]));
        let z = DifferentialForm::zero(3, 2);
        assert!(z.evaluate(&[1.0, 2.0, 3.0]).unwrap().values().all(|&v| v == 0.0));
        let b = form(2, 2, &[(&[0, 1], "x1*x2")]);
        assert_eq!(b.evaluate(&[2.0, 5.0]).unwrap()[&vec![0, 1]], 10.0);
        assert!(matches!(b.evaluate(&[1.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn from_terms_folds_unsorted_indices() {
        let a = form(3, 2, &[(&[2, 0], "x1"), (&[0, 2], "1"), (&[1, 1], "5")]);
        let table = a.evaluate(&[4.0, 0.0, 0.0]).unwrap();
        assert_eq!(table, BTreeMap::from([(vec![0, 2], -3.0)]));
    }

    #[test]
    fn basis_of_coordinate_wedges() {
        let w = vec![DifferentialForm::coordinate(2, 0), DifferentialForm::coordinate(2, 1)];
        let v = vec![form(2, 2, &[(&[0, 1], "1")])];
        let dec = express_in_basis(&w, &v, &SampleBox::unit(2), 16, 1e-9, 7).unwrap();
        assert!((dec.c[0][1][0] - 1.0).abs() < 1e-12);
        assert!((dec.c[1][0][0] + 1.0).abs() < 1e-12);
        assert_eq!(dec.c[0][0][0], 0.0);
        assert_eq!(dec.c[1][1][0], 0.0);
        assert_eq!(dec.relations.len(), 1);
        let (i, j, coef) = dec.relations[0].brackets[0];
        assert_eq!((i, j), (0, 1));
        assert!((coef - 2.0).abs() < 1e-12);
        let expanded = dec.relations[0].expand();
        assert!((expanded[&vec![0, 1]] - 2.0).abs() < 1e-12);
        assert!((expanded[&vec![1, 0]] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn basis_single_form() {
        let w = vec![DifferentialForm::coordinate(2, 0)];
        let v = vec![form(2, 2, &[(&[0, 1], "1")])];
        let dec = express_in_basis(&w, &v, &SampleBox::unit(2), 8, 1e-9, 1).unwrap();
        assert_eq!(dec.c[0][0][0], 0.0);
        assert!(dec.relations[0].brackets.is_empty());
    }

    #[test]
    fn basis_rejects_non_closed_forms() {
        let w = vec![DifferentialForm::coordinate(2, 0), form(2, 1, &[(&[1], "x1")])];
        let v = vec![form(2, 2, &[(&[0, 1], "1")])];
        let err = express_in_basis(&w, &v, &SampleBox::unit(2), 8, 1e-9, 1).unwrap_err();
        assert!(matches!(err, Error::NotClosed { index: 2, .. }));
    }

    #[test]
    fn basis_detects_insufficient_span() {
        let w: Vec<_> = (0..3).map(|i| DifferentialForm::coordinate(3, i)).collect();
        let v = vec![form(3, 2, &[(&[0, 1], "1")])];
        let err = express_in_basis(&w, &v, &SampleBox::unit(3), 8, 1e-9, 1).unwrap_err();
        assert!(matches!(err, Error::BasisInsufficient { .. }));
    }

    #[test]
    fn basis_detects_dependence() {
        let w = vec![DifferentialForm::coordinate(2, 0)];
        let v = vec![form(2, 2, &[(&[0, 1], "1")]), form(2, 2, &[(&[0, 1], "2")])];
        let err = express_in_basis(&w, &v, &SampleBox::unit(2), 8, 1e-9, 1).unwrap_err();
        assert_eq!(err, Error::DependentBasis);
    }
}
