//! Iterated path integrals and transport series.
//!
//! For 1-forms `w_1..w_k` and a path `g` the iterated integral is
//! `int_{0<t_1<...<t_k<1} a_1(t_1) ... a_k(t_k)` where `g^* w_i = a_i dt`.
//! All of them are computed from running integrals on a shared
//! [`LineGrid`]: the running integral of a prefix feeds the next letter.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{sort_sign, CoefficientTable, DifferentialForm, MultiIndex};
use crate::geometry::{concat_paths, Membrane, Path, DEFAULT_ENDPOINT_TOL};
use crate::quadrature::{Estimate, LineGrid, QuadratureConfig};
use crate::report::{Check, Tolerance};
use crate::shuffles::shuffle_words;

pub type Word = Vec<usize>;

/// Truncated element of the free associative algebra on `A_0..A_{m-1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorSeries {
    alphabet: usize,
    level: usize,
    coeffs: BTreeMap<Word, f64>,
}

impl TensorSeries {
    /// The series `1`.
    pub fn identity(alphabet: usize, level: usize) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(Vec::new(), 1.0);
        Self {
            alphabet,
            level,
            coeffs,
        }
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn get(&self, word: &[usize]) -> f64 {
        self.coeffs.get(word).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, word: Word, value: f64) -> Result<()> {
        if word.len() > self.level || word.iter().any(|&l| l >= self.alphabet) {
            return Err(Error::Invalid(format!("word {word:?} is outside the series")));
        }
        self.coeffs.insert(word, value);
        Ok(())
    }

    pub fn coefficients(&self) -> &BTreeMap<Word, f64> {
        &self.coeffs
    }

    /// Truncated product; the coefficient of `w` sums over splittings `w = uv`.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        if self.alphabet != other.alphabet || self.level != other.level {
            return Err(Error::DimensionMismatch(format!(
                "series over ({}, {}) and ({}, {})",
                self.alphabet, self.level, other.alphabet, other.level
            )));
        }
        let mut out = Self {
            alphabet: self.alphabet,
            level: self.level,
            coeffs: BTreeMap::new(),
        };
        for word in all_words(self.alphabet, self.level) {
            let mut sum = 0.0;
            for cut in 0..=word.len() {
                sum += self.get(&word[..cut]) * other.get(&word[cut..]);
            }
            if sum != 0.0 || word.is_empty() {
                out.coeffs.insert(word, sum);
            }
        }
        Ok(out)
    }

    /// Largest coefficient difference over all words.
    pub fn max_diff(&self, other: &Self) -> f64 {
        all_words(self.alphabet, self.level.max(other.level))
            .iter()
            .map(|w| (self.get(w) - other.get(w)).abs())
            .fold(0.0, f64::max)
    }

    /// `sum_w c_w A_{w_1} ... A_{w_k}`.
    pub fn represent(&self, matrices: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
        if matrices.len() != self.alphabet {
            return Err(Error::DimensionMismatch("one matrix per letter is required".into()));
        }
        let size = matrices.first().map_or(0, |m| m.nrows());
        let mut out = DMatrix::zeros(size, size);
        for (word, &c) in &self.coeffs {
            let mut prod = DMatrix::identity(size, size);
            for &l in word {
                prod *= &matrices[l];
            }
            out += prod * c;
        }
        Ok(out)
    }
}

/// Words of length `<= level` in lexicographic order.
pub fn all_words(alphabet: usize, level: usize) -> Vec<Word> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..level {
        let mut next = Vec::new();
        for w in &frontier {
            for l in 0..alphabet {
                let mut v: Word = w.clone();
                v.push(l);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out.sort();
    out
}

fn check_one_forms(path: &Path, forms: &[DifferentialForm]) -> Result<()> {
    if path.cube_dim() != 1 {
        return Err(Error::DimensionMismatch("iterated path integrals need a path".into()));
    }
    for f in forms {
        if f.degree() != 1 {
            return Err(Error::DegreeMismatch(format!(
                "path integrals take 1-forms, got a {}-form",
                f.degree()
            )));
        }
    }
    Ok(())
}

/// Pullback coefficients `a_i` at the grid nodes.
fn letter_tables(path: &Path, forms: &[DifferentialForm], grid: &LineGrid) -> Result<Vec<Vec<f64>>> {
    forms
        .iter()
        .map(|f| {
            let pb = path.pullback(f)?;
            grid.nodes().iter().map(|&s| pb.component(&[0], &[s])).collect()
        })
        .collect()
}

/// Iterated integrals of the letters `forms[w_1], forms[w_2], ...` for each
/// requested word, with error estimates.
pub fn iterated_integrals(
    path: &Path,
    forms: &[DifferentialForm],
    words: &[Word],
    cfg: &QuadratureConfig,
) -> Result<Vec<Estimate>> {
    check_one_forms(path, forms)?;
    if words.iter().flatten().any(|&l| l >= forms.len()) {
        return Err(Error::Invalid("word letter has no form".into()));
    }
    let mut levels: Vec<Vec<f64>> = vec![Vec::new(); words.len()];
    for level in 0..cfg.refinement_levels {
        let grid = LineGrid::new(&path.breakpoints(), cfg, level)?;
        let tables = letter_tables(path, forms, &grid)?;
        let mut running: HashMap<Word, Vec<f64>> = HashMap::new();
        running.insert(Vec::new(), vec![1.0; grid.nodes().len()]);
        for (wi, word) in words.iter().enumerate() {
            let Some((&last, prefix)) = word.split_last() else {
                levels[wi].push(1.0);
                continue;
            };
            for cut in 1..=prefix.len() {
                if !running.contains_key(&prefix[..cut]) {
                    let prev = &running[&prefix[..cut - 1]];
                    let product: Vec<f64> = prev
                        .iter()
                        .zip(&tables[prefix[cut - 1]])
                        .map(|(r, a)| r * a)
                        .collect();
                    running.insert(prefix[..cut].to_vec(), grid.cumulative(&product));
                }
            }
            let product: Vec<f64> = running[prefix]
                .iter()
                .zip(&tables[last])
                .map(|(r, a)| r * a)
                .collect();
            levels[wi].push(grid.total(&product));
        }
    }
    words
        .iter()
        .zip(levels)
        .map(|(w, l)| {
            if w.is_empty() {
                Ok(Estimate::exact(1.0))
            } else {
                cfg.check(cfg.extrapolate(&l))
            }
        })
        .collect()
}

/// `int_g w_1 w_2 ... w_k` for the listed 1-forms in order.
pub fn iterated_path_integral(path: &Path, forms: &[DifferentialForm], cfg: &QuadratureConfig) -> Result<Estimate> {
    let word: Word = (0..forms.len()).collect();
    Ok(iterated_integrals(path, forms, &[word], cfg)?[0])
}

/// All iterated integrals of `forms` up to length `level`.
pub fn transport_series(
    path: &Path,
    forms: &[DifferentialForm],
    level: usize,
    cfg: &QuadratureConfig,
) -> Result<TensorSeries> {
    let words = all_words(forms.len(), level);
    let values = iterated_integrals(path, forms, &words, cfg)?;
    let mut series = TensorSeries::identity(forms.len(), level);
    for (w, v) in words.into_iter().zip(values) {
        series.coeffs.insert(w, v.value);
    }
    Ok(series)
}

/// `(int w_1..w_m')(int v_1..v_m'') = sum over shuffles`.
pub fn check_shuffle(
    path: &Path,
    first: &[DifferentialForm],
    second: &[DifferentialForm],
    cfg: &QuadratureConfig,
    tol: Tolerance,
) -> Result<Check> {
    let (lhs, rhs) = shuffle_sides(path, first, second, cfg)?;
    Ok(Check::compare("path-shuffle", lhs, rhs, tol))
}

fn shuffle_sides(
    path: &Path,
    first: &[DifferentialForm],
    second: &[DifferentialForm],
    cfg: &QuadratureConfig,
) -> Result<(f64, f64)> {
    let forms: Vec<DifferentialForm> = first.iter().chain(second).cloned().collect();
    let u: Word = (0..first.len()).collect();
    let v: Word = (first.len()..forms.len()).collect();
    let mut words = vec![u.clone(), v.clone()];
    words.extend(shuffle_words(&u, &v));
    let values = iterated_integrals(path, &forms, &words, cfg)?;
    let lhs = values[0].value * values[1].value;
    let rhs = values[2..].iter().map(|e| e.value).sum();
    Ok((lhs, rhs))
}

/// Per-word comparison of `Psi_a Psi_b` with the series of `a` then `b`.
pub fn check_composition(
    first: &Path,
    second: &Path,
    forms: &[DifferentialForm],
    level: usize,
    cfg: &QuadratureConfig,
    tol: Tolerance,
) -> Result<Vec<Check>> {
    let joined = concat_paths(first, second, DEFAULT_ENDPOINT_TOL)?;
    let product = transport_series(first, forms, level, cfg)?.multiply(&transport_series(second, forms, level, cfg)?)?;
    let direct = transport_series(&joined, forms, level, cfg)?;
    Ok(all_words(forms.len(), level)
        .iter()
        .filter(|w| !w.is_empty())
        .map(|w| {
            let name = format!("composition[{}]", word_label(w));
            Check::compare(name, product.get(w), direct.get(w), tol)
        })
        .collect())
}

/// `1-2-1` style label with one-based letters.
pub fn word_label(word: &[usize]) -> String {
    word.iter().map(|l| (l + 1).to_string()).collect::<Vec<_>>().join("-")
}

/// An iterated integral with pointwise decorations at both endpoints.
#[derive(Debug, Clone)]
pub struct Decorated {
    pub start: DifferentialForm,
    pub forms: Vec<DifferentialForm>,
    pub end: DifferentialForm,
}

/// Elements of `Lambda(V_0) (x) Lambda(V_1)`, keyed by the pair of
/// increasing multi-indices.
pub type GradedTable = BTreeMap<(MultiIndex, MultiIndex), f64>;

/// Wedge product of two numeric coefficient tables.
pub fn wedge_tables(a: &CoefficientTable, b: &CoefficientTable) -> CoefficientTable {
    let mut out = CoefficientTable::new();
    for (i, x) in a {
        for (j, y) in b {
            let joined: Vec<usize> = i.iter().chain(j).copied().collect();
            if let Some((sign, sorted)) = sort_sign(&joined) {
                *out.entry(sorted).or_insert(0.0) += sign * x * y;
            }
        }
    }
    out.retain(|_, v| *v != 0.0);
    out
}

pub fn tensor_tables(a: &CoefficientTable, b: &CoefficientTable, scale: f64) -> GradedTable {
    let mut out = GradedTable::new();
    for (i, x) in a {
        for (j, y) in b {
            let v = scale * x * y;
            if v != 0.0 {
                out.insert((i.clone(), j.clone()), v);
            }
        }
    }
    out
}

/// Graded product `(a0 (x) a1)(b0 (x) b1) = (-1)^{|a1||b0|} (a0^b0) (x) (a1^b1)`.
pub fn graded_product(x: &GradedTable, y: &GradedTable) -> GradedTable {
    let mut out = GradedTable::new();
    for ((a0, a1), u) in x {
        for ((b0, b1), v) in y {
            let koszul = if (a1.len() * b0.len()) % 2 == 1 { -1.0 } else { 1.0 };
            let (Some((s0, i0)), Some((s1, i1))) = (
                sort_sign(&[a0.as_slice(), b0].concat()),
                sort_sign(&[a1.as_slice(), b1].concat()),
            ) else {
                continue;
            };
            *out.entry((i0, i1)).or_insert(0.0) += koszul * s0 * s1 * u * v;
        }
    }
    out.retain(|_, v| *v != 0.0);
    out
}

/// Both sides of the decorated shuffle identity, as graded tables.
pub fn decorated_shuffle_sides(
    path: &Path,
    first: &Decorated,
    second: &Decorated,
    cfg: &QuadratureConfig,
) -> Result<(GradedTable, GradedTable)> {
    let (p0, p1) = (path.point(&[0.0])?, path.point(&[1.0])?);
    let forms: Vec<DifferentialForm> = first.forms.iter().chain(&second.forms).cloned().collect();
    let u: Word = (0..first.forms.len()).collect();
    let v: Word = (first.forms.len()..forms.len()).collect();
    let mut words = vec![u.clone(), v.clone()];
    words.extend(shuffle_words(&u, &v));
    let values = iterated_integrals(path, &forms, &words, cfg)?;

    let left = tensor_tables(&first.start.evaluate(&p0)?, &first.end.evaluate(&p1)?, values[0].value);
    let right = tensor_tables(&second.start.evaluate(&p0)?, &second.end.evaluate(&p1)?, values[1].value);
    let lhs = graded_product(&left, &right);

    let start = first.start.wedge(&second.start)?.evaluate(&p0)?;
    let end = first.end.wedge(&second.end)?.evaluate(&p1)?;
    let sign = if (first.end.degree() * second.start.degree()) % 2 == 1 { -1.0 } else { 1.0 };
    let sum: f64 = values[2..].iter().map(|e| e.value).sum();
    let rhs = tensor_tables(&start, &end, sign * sum);
    Ok((lhs, rhs))
}

/// One check per component of the decorated shuffle identity.
pub fn check_decorated_shuffle(
    path: &Path,
    first: &Decorated,
    second: &Decorated,
    cfg: &QuadratureConfig,
    tol: Tolerance,
) -> Result<Vec<Check>> {
    let (lhs, rhs) = decorated_shuffle_sides(path, first, second, cfg)?;
    let mut keys: Vec<&(MultiIndex, MultiIndex)> = lhs.keys().chain(rhs.keys()).collect();
    keys.sort();
    keys.dedup();
    if keys.is_empty() {
        return Ok(vec![Check::compare("decorated-shuffle", 0.0, 0.0, tol)]);
    }
    Ok(keys
        .into_iter()
        .map(|k| {
            let name = format!("decorated-shuffle[{}|{}]", label(&k.0), label(&k.1));
            let l = lhs.get(k).copied().unwrap_or(0.0);
            let r = rhs.get(k).copied().unwrap_or(0.0);
            Check::compare(name, l, r, tol)
        })
        .collect())
}

fn label(index: &[usize]) -> String {
    if index.is_empty() {
        return "1".into();
    }
    index
        .iter()
        .map(|i| format!("dx{}", i + 1))
        .collect::<Vec<_>>()
        .join("^")
}

/// `(int_g w theta ... theta) theta(g(1))` with `n` copies of `theta`.
pub fn transport_step(
    path: &Path,
    w: &DifferentialForm,
    theta: &DifferentialForm,
    n: usize,
    cfg: &QuadratureConfig,
) -> Result<CoefficientTable> {
    let mut forms = vec![w.clone()];
    forms.extend(std::iter::repeat_n(theta.clone(), n));
    let s = iterated_path_integral(path, &forms, cfg)?.value;
    let mut table = theta.evaluate(&path.point(&[1.0])?)?;
    for v in table.values_mut() {
        *v *= s;
    }
    table.retain(|_, v| *v != 0.0);
    Ok(table)
}

/// A square matrix of 1-forms.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixConnection {
    size: usize,
    dim: usize,
    entries: Vec<DifferentialForm>,
}

impl MatrixConnection {
    /// Entries in row-major order.
    pub fn new(size: usize, entries: Vec<DifferentialForm>) -> Result<Self> {
        if entries.len() != size * size || size == 0 {
            return Err(Error::DimensionMismatch(format!(
                "{size}x{size} connection needs {} entries",
                size * size
            )));
        }
        let dim = entries[0].dim();
        if entries.iter().any(|e| e.degree() != 1 || e.dim() != dim) {
            return Err(Error::DegreeMismatch("connection entries must be 1-forms on one chart".into()));
        }
        Ok(Self { size, dim, entries })
    }

    /// `A * f` for a constant matrix `A` and a 1-form `f`.
    pub fn scaled(a: &DMatrix<f64>, f: &DifferentialForm) -> Result<Self> {
        let entries = (0..a.nrows())
            .flat_map(|r| (0..a.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| f.scale(&a[(r, c)].into()))
            .collect();
        Self::new(a.nrows(), entries)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn entry(&self, r: usize, c: usize) -> &DifferentialForm {
        &self.entries[r * self.size + c]
    }

    /// The `dx_p ^ dx_q` component of `d theta - theta ^ theta` at `x`.
    pub fn curvature(&self, x: &[f64], plane: (usize, usize)) -> Result<DMatrix<f64>> {
        let key = vec![plane.0, plane.1];
        let comp = |f: &DifferentialForm| -> Result<f64> {
            Ok(f.evaluate(x)?.get(&key).copied().unwrap_or(0.0))
        };
        let mut out = DMatrix::zeros(self.size, self.size);
        for r in 0..self.size {
            for c in 0..self.size {
                let mut v = comp(&self.entry(r, c).exterior_derivative())?;
                for k in 0..self.size {
                    v -= comp(&self.entry(r, k).wedge(self.entry(k, c))?)?;
                }
                out[(r, c)] = v;
            }
        }
        Ok(out)
    }
}

/// Transport `Y(1)` of `Y' = Theta(t) Y`, `Y(0) = I`, truncated after
/// `level` Picard iterations, where `g^* theta = Theta(t) dt`.
pub fn holonomy(path: &Path, conn: &MatrixConnection, level: usize, cfg: &QuadratureConfig) -> Result<DMatrix<f64>> {
    check_one_forms(path, &conn.entries)?;
    let m = conn.size;
    let mut levels: Vec<Vec<f64>> = vec![Vec::new(); m * m];
    for r in 0..cfg.refinement_levels {
        let grid = LineGrid::new(&path.breakpoints(), cfg, r)?;
        let theta = letter_tables(path, &conn.entries, &grid)?;
        let nodes = grid.nodes().len();
        let mut y: Vec<Vec<f64>> = (0..m * m)
            .map(|e| vec![if e / m == e % m { 1.0 } else { 0.0 }; nodes])
            .collect();
        let mut total: Vec<f64> = (0..m * m).map(|e| if e / m == e % m { 1.0 } else { 0.0 }).collect();
        for _ in 0..level {
            let mut next = Vec::with_capacity(m * m);
            for e in 0..m * m {
                let (i, j) = (e / m, e % m);
                let product: Vec<f64> = (0..nodes)
                    .map(|s| (0..m).map(|k| theta[i * m + k][s] * y[k * m + j][s]).sum())
                    .collect();
                total[e] += grid.total(&product);
                next.push(grid.cumulative(&product));
            }
            y = next;
        }
        for e in 0..m * m {
            levels[e].push(total[e]);
        }
    }
    let mut out = DMatrix::zeros(m, m);
    for e in 0..m * m {
        out[(e / m, e % m)] = cfg.check(cfg.extrapolate(&levels[e]))?.value;
    }
    Ok(out)
}

/// Positively oriented boundary of the square of side `eps` centred at
/// `center`, spanned by coordinate axes `plane`.
pub fn square_loop(center: &[f64], eps: f64, plane: (usize, usize)) -> Result<Path> {
    let corner = |sp: f64, sq: f64| {
        let mut x = center.to_vec();
        x[plane.0] += sp * eps / 2.0;
        x[plane.1] += sq * eps / 2.0;
        x
    };
    let c = [corner(-1.0, -1.0), corner(1.0, -1.0), corner(1.0, 1.0), corner(-1.0, 1.0)];
    let side = |a: usize| Membrane::line(&c[a], &c[(a + 1) % 4]);
    let first = concat_paths(&side(0)?, &side(1)?, DEFAULT_ENDPOINT_TOL)?;
    let second = concat_paths(&side(2)?, &side(3)?, DEFAULT_ENDPOINT_TOL)?;
    concat_paths(&first, &second, DEFAULT_ENDPOINT_TOL)
}

/// Residuals at or below this are treated as exact.
pub const ROUNDOFF: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct HolonomySample {
    pub eps: f64,
    /// `(H - I) / eps^2`, row-major.
    pub fitted: Vec<f64>,
    /// Largest entry of `|fitted - F|`.
    pub fit_error: f64,
    /// Largest entry of `|H - I - eps^2 F|`.
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HolonomyReport {
    /// `d theta - theta ^ theta` at the centre, row-major.
    pub curvature: Vec<f64>,
    pub samples: Vec<HolonomySample>,
    /// Empirical order between consecutive sizes; `None` when both
    /// residuals are at roundoff level.
    pub orders: Vec<Option<f64>>,
}

impl HolonomyReport {
    /// Smallest finite order, or `None` when all residuals vanish.
    pub fn min_order(&self) -> Option<f64> {
        self.orders.iter().flatten().copied().reduce(f64::min)
    }
}

pub fn holonomy_curvature_check(
    conn: &MatrixConnection,
    center: &[f64],
    eps: &[f64],
    level: usize,
    cfg: &QuadratureConfig,
) -> Result<HolonomyReport> {
    if conn.dim < 2 || center.len() != conn.dim {
        return Err(Error::DimensionMismatch("centre must be a point of a chart of dimension >= 2".into()));
    }
    let plane = (0, 1);
    let f = conn.curvature(center, plane)?;
    let id = DMatrix::<f64>::identity(conn.size, conn.size);
    let mut samples = Vec::with_capacity(eps.len());
    for &e in eps {
        let h = holonomy(&square_loop(center, e, plane)?, conn, level, cfg)?;
        let fitted = (&h - &id) / (e * e);
        samples.push(HolonomySample {
            eps: e,
            fit_error: (&fitted - &f).amax(),
            residual: (&h - &id - &f * (e * e)).amax(),
            fitted: row_major(&fitted),
        });
    }
    let orders = samples
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            if a.residual <= ROUNDOFF && b.residual <= ROUNDOFF {
                None
            } else {
                Some((a.residual / b.residual).ln() / (a.eps / b.eps).ln())
            }
        })
        .collect();
    Ok(HolonomyReport {
        curvature: row_major(&f),
        samples,
        orders,
    })
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows())
        .flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)]))
        .collect()
}
