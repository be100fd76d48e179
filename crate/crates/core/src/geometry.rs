//! Paths and membranes `[0,1]^n -> R^d`, possibly piecewise along the
//! first cube direction, and pullbacks of forms along them.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::{coordinate_names, Expr};
use crate::forms::{DifferentialForm, MultiIndex};

pub const DEFAULT_ENDPOINT_TOL: f64 = 1e-9;
pub const DEFAULT_FACE_TOL: f64 = 1e-9;

/// Values of a map on a uniform grid with `cells + 1` nodes per axis.
/// Node `(i_1, ..., i_n)` is stored at `((i_1 * (N+1) + i_2) * (N+1) + ...)`,
/// followed by its `d` ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    cube_dim: usize,
    ambient_dim: usize,
    cells: usize,
    values: Vec<f64>,
    jacobian: Vec<f64>,
}

impl SampleGrid {
    pub fn new(cube_dim: usize, ambient_dim: usize, cells: usize, values: Vec<f64>) -> Result<Self> {
        if cells < 2 {
            return Err(Error::Invalid("a sample grid needs at least 2 cells per axis".into()));
        }
        let nodes = (cells + 1).pow(cube_dim as u32);
        if values.len() != nodes * ambient_dim {
            return Err(Error::DimensionMismatch(format!(
                "grid of {nodes} nodes in R^{ambient_dim} needs {} values, got {}",
                nodes * ambient_dim,
                values.len()
            )));
        }
        let mut grid = Self {
            cube_dim,
            ambient_dim,
            cells,
            values,
            jacobian: Vec::new(),
        };
        grid.jacobian = grid.node_jacobians();
        Ok(grid)
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn<F>(cube_dim: usize, ambient_dim: usize, cells: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>>,
    {
        let side = cells + 1;
        let nodes = side.pow(cube_dim as u32);
        let mut values = Vec::with_capacity(nodes * ambient_dim);
        let mut t = vec![0.0; cube_dim];
        for node in 0..nodes {
            let mut rest = node;
            for a in (0..cube_dim).rev() {
                t[a] = (rest % side) as f64 / cells as f64;
                rest /= side;
            }
            let p = f(&t)?;
            if p.len() != ambient_dim {
                return Err(Error::DimensionMismatch("sample has the wrong length".into()));
            }
            values.extend(p);
        }
        Self::new(cube_dim, ambient_dim, cells, values)
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    fn node(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * (self.cells + 1) + i)
    }

    fn node_jacobians(&self) -> Vec<f64> {
        let (n, d, side) = (self.cube_dim, self.ambient_dim, self.cells + 1);
        let h = 1.0 / self.cells as f64;
        let nodes = side.pow(n as u32);
        let mut jac = vec![0.0; nodes * d * n];
        let mut idx = vec![0usize; n];
        for node in 0..nodes {
            let mut rest = node;
            for a in (0..n).rev() {
                idx[a] = rest % side;
                rest /= side;
            }
            for a in 0..n {
                let at = |k: usize, idx: &mut Vec<usize>| {
                    let saved = idx[a];
                    idx[a] = k;
                    let base = self.node(idx) * d;
                    idx[a] = saved;
                    base
                };
                let i = idx[a];
                let mut stencil: [(usize, f64); 3] = [(0, 0.0); 3];
                if i == 0 {
                    stencil = [(0, -1.5 / h), (1, 2.0 / h), (2, -0.5 / h)];
                } else if i == self.cells {
                    stencil = [(i, 1.5 / h), (i - 1, -2.0 / h), (i - 2, 0.5 / h)];
                } else {
                    stencil[0] = (i + 1, 0.5 / h);
                    stencil[1] = (i - 1, -0.5 / h);
                }
                for &(k, c) in &stencil {
                    if c == 0.0 {
                        continue;
                    }
                    let base = at(k, &mut idx);
                    for r in 0..d {
                        jac[(node * d + r) * n + a] += c * self.values[base + r];
                    }
                }
            }
        }
        jac
    }

    /// Multilinear interpolation of a per-node table with `width` entries.
    fn interpolate(&self, table: &[f64], width: usize, t: &[f64], out: &mut [f64]) {
        let n = self.cube_dim;
        let mut lo = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for a in 0..n {
            let x = t[a].clamp(0.0, 1.0) * self.cells as f64;
            let i = (x.floor() as usize).min(self.cells - 1);
            lo[a] = i;
            frac[a] = x - i as f64;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut corner = vec![0usize; n];
        for mask in 0..(1usize << n) {
            let mut w = 1.0;
            for a in 0..n {
                let up = mask >> a & 1 == 1;
                corner[a] = lo[a] + usize::from(up);
                w *= if up { frac[a] } else { 1.0 - frac[a] };
            }
            if w == 0.0 {
                continue;
            }
            let base = self.node(&corner) * width;
            for (o, v) in out.iter_mut().zip(&table[base..base + width]) {
                *o += w * v;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PieceMap {
    /// Components as expressions in the global cube variables `t1..tn`.
    Symbolic(Vec<Expr>),
    /// A grid whose first coordinate runs linearly from `u0` at the start
    /// of the piece to `u1` at its end.
    Sampled { grid: SampleGrid, u0: f64, u1: f64 },
}

/// The part of a membrane over `start <= t1 <= end`.
#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub map: PieceMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Membrane {
    cube_dim: usize,
    ambient_dim: usize,
    pieces: Vec<Piece>,
}

/// A path is a membrane on the 1-cube.
pub type Path = Membrane;

impl Membrane {
    /// A smooth membrane with the given components in `t1..tn`.
    pub fn symbolic(cube_dim: usize, components: Vec<Expr>) -> Result<Self> {
        if cube_dim == 0 {
            return Err(Error::Invalid("cube dimension must be positive".into()));
        }
        if let Some(e) = components.iter().find(|e| e.arity() > cube_dim) {
            return Err(Error::DimensionMismatch(format!(
                "component reads variable {} of a {cube_dim}-cube",
                e.arity()
            )));
        }
        Ok(Self {
            cube_dim,
            ambient_dim: components.len(),
            pieces: vec![Piece {
                start: 0.0,
                end: 1.0,
                map: PieceMap::Symbolic(components),
            }],
        })
    }

    /// Parses components written in `t1..tn` (or `t` when `cube_dim == 1`).
    pub fn parse(cube_dim: usize, components: &[&str]) -> Result<Self> {
        let names = cube_names(cube_dim);
        let exprs = components
            .iter()
            .map(|c| crate::expr::parse(c, &names))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::symbolic(cube_dim, exprs)
    }

    pub fn sampled(grid: SampleGrid) -> Self {
        Self {
            cube_dim: grid.cube_dim,
            ambient_dim: grid.ambient_dim,
            pieces: vec![Piece {
                start: 0.0,
                end: 1.0,
                map: PieceMap::Sampled {
                    grid,
                    u0: 0.0,
                    u1: 1.0,
                },
            }],
        }
    }

    /// The straight path from `a` to `b` at constant speed.
    pub fn line(a: &[f64], b: &[f64]) -> Result<Path> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch("line endpoints differ in length".into()));
        }
        let t = Expr::var(0);
        let comps = a
            .iter()
            .zip(b)
            .map(|(&a, &b)| Expr::add(Expr::from(a), Expr::mul(Expr::from(b - a), t.clone())))
            .collect();
        Self::symbolic(1, comps)
    }

    /// The inclusion of the unit cube, `g(t) = t`.
    pub fn identity(n: usize) -> Self {
        Self::symbolic(n, (0..n).map(Expr::var).collect()).expect("valid identity")
    }

    pub fn cube_dim(&self) -> usize {
        self.cube_dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Seams between pieces along direction 1.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces[..self.pieces.len() - 1].iter().map(|p| p.end).collect()
    }

    /// Index of the piece containing `t1`; a seam belongs to the earlier piece.
    pub fn piece_index(&self, t1: f64) -> usize {
        self.pieces
            .iter()
            .position(|p| t1 <= p.end)
            .unwrap_or(self.pieces.len() - 1)
    }

    pub fn point(&self, t: &[f64]) -> Result<Vec<f64>> {
        self.check_arg(t)?;
        let piece = &self.pieces[self.piece_index(t[0])];
        match &piece.map {
            PieceMap::Symbolic(comps) => comps.iter().map(|c| Ok(c.eval(t)?)).collect(),
            PieceMap::Sampled { grid, .. } => {
                let local = piece.local(t);
                let mut out = vec![0.0; self.ambient_dim];
                grid.interpolate(&grid.values, self.ambient_dim, &local, &mut out);
                Ok(out)
            }
        }
    }

    /// Jacobian `dg_r / dt_a`, row-major `d x n`.
    pub fn jacobian(&self, t: &[f64]) -> Result<Vec<f64>> {
        self.check_arg(t)?;
        let piece = &self.pieces[self.piece_index(t[0])];
        let (d, n) = (self.ambient_dim, self.cube_dim);
        match &piece.map {
            PieceMap::Symbolic(comps) => {
                let mut out = Vec::with_capacity(d * n);
                for c in comps {
                    for a in 0..n {
                        out.push(c.derivative(a).eval(t)?);
                    }
                }
                Ok(out)
            }
            PieceMap::Sampled { grid, .. } => Ok(piece.sampled_jacobian(grid, t, d, n)),
        }
    }

    fn check_arg(&self, t: &[f64]) -> Result<()> {
        if t.len() != self.cube_dim {
            return Err(Error::DimensionMismatch(format!(
                "point of length {} on a {}-cube",
                t.len(),
                self.cube_dim
            )));
        }
        Ok(())
    }

    /// Pulls `form` back to the cube.
    pub fn pullback(&self, form: &DifferentialForm) -> Result<Pullback> {
        if form.dim() != self.ambient_dim {
            return Err(Error::DimensionMismatch(format!(
                "form on R^{} pulled back along a map into R^{}",
                form.dim(),
                self.ambient_dim
            )));
        }
        let pieces = self
            .pieces
            .iter()
            .map(|p| match &p.map {
                PieceMap::Symbolic(comps) => {
                    Ok(PulledPiece::Symbolic(symbolic_pullback(self.cube_dim, comps, form)?))
                }
                PieceMap::Sampled { .. } => Ok(PulledPiece::Sampled(form.clone())),
            })
            .collect::<Result<_>>()?;
        Ok(Pullback {
            membrane: self.clone(),
            form: form.clone(),
            degree: form.degree(),
            pieces,
        })
    }

    /// `g'(2t1, ...)` on `t1 <= 1/2` followed by `g''(2t1 - 1, ...)`.
    pub fn glue(&self, other: &Membrane, face_tol: f64) -> Result<Membrane> {
        if self.cube_dim != other.cube_dim || self.ambient_dim != other.ambient_dim {
            return Err(Error::DimensionMismatch("glued membranes differ in shape".into()));
        }
        let gap = self.face_gap(other)?;
        if !(gap <= face_tol) {
            return Err(if self.cube_dim == 1 {
                Error::EndpointMismatch { gap, tol: face_tol }
            } else {
                Error::FaceMismatch { gap, tol: face_tol }
            });
        }
        let mut pieces = Vec::with_capacity(self.pieces.len() + other.pieces.len());
        let (lo, hi) = (
            rescale_first(self.cube_dim, 2.0, 0.0),
            rescale_first(self.cube_dim, 2.0, -1.0),
        );
        for p in &self.pieces {
            pieces.push(p.reparametrized(&lo, p.start / 2.0, p.end / 2.0));
        }
        for p in &other.pieces {
            pieces.push(p.reparametrized(&hi, 0.5 + p.start / 2.0, 0.5 + p.end / 2.0));
        }
        Ok(Membrane {
            cube_dim: self.cube_dim,
            ambient_dim: self.ambient_dim,
            pieces,
        })
    }

    /// Largest distance between the end face of `self` and the start face
    /// of `other` over a test grid.
    pub fn face_gap(&self, other: &Membrane) -> Result<f64> {
        let n = self.cube_dim;
        let per_axis = if n == 1 { 1 } else { 9usize };
        let mut gap: f64 = 0.0;
        for k in 0..per_axis.pow((n - 1) as u32) {
            let mut a = vec![1.0; n];
            let mut rest = k;
            for x in a.iter_mut().skip(1) {
                *x = (rest % per_axis) as f64 / (per_axis - 1) as f64;
                rest /= per_axis;
            }
            let mut b = a.clone();
            b[0] = 0.0;
            let (p, q) = (self.point(&a)?, other.point(&b)?);
            for (x, y) in p.iter().zip(&q) {
                gap = gap.max((x - y).abs());
            }
        }
        Ok(gap)
    }

    /// Runs direction 1 backwards.
    pub fn reverse(&self) -> Membrane {
        let flip = rescale_first(self.cube_dim, -1.0, 1.0);
        let pieces = self
            .pieces
            .iter()
            .rev()
            .map(|p| match &p.map {
                PieceMap::Symbolic(c) => Piece {
                    start: 1.0 - p.end,
                    end: 1.0 - p.start,
                    map: PieceMap::Symbolic(c.iter().map(|e| e.substitute(&flip)).collect()),
                },
                PieceMap::Sampled { grid, u0, u1 } => Piece {
                    start: 1.0 - p.end,
                    end: 1.0 - p.start,
                    map: PieceMap::Sampled {
                        grid: grid.clone(),
                        u0: *u1,
                        u1: *u0,
                    },
                },
            })
            .collect();
        Membrane {
            cube_dim: self.cube_dim,
            ambient_dim: self.ambient_dim,
            pieces,
        }
    }

    /// Replaces `t1` by `phi(t1)` in a smooth symbolic membrane.
    pub fn reparametrize(&self, phi: &Expr) -> Result<Membrane> {
        let [Piece {
            map: PieceMap::Symbolic(comps),
            ..
        }] = self.pieces.as_slice()
        else {
            return Err(Error::Invalid(
                "only single-piece symbolic membranes can be reparametrized".into(),
            ));
        };
        let mut subs: Vec<Expr> = (0..self.cube_dim).map(Expr::var).collect();
        subs[0] = phi.clone();
        Membrane::symbolic(self.cube_dim, comps.iter().map(|c| c.substitute(&subs)).collect())
    }

    /// The membrane constant in direction 1, equal to the end face of `self`.
    pub fn end_face_extension(&self) -> Result<Membrane> {
        match &self.pieces.last().expect("nonempty").map {
            PieceMap::Symbolic(comps) => {
                let mut subs: Vec<Expr> = (0..self.cube_dim).map(Expr::var).collect();
                subs[0] = Expr::one();
                Membrane::symbolic(self.cube_dim, comps.iter().map(|c| c.substitute(&subs)).collect())
            }
            PieceMap::Sampled { grid, .. } => {
                let grid = SampleGrid::from_fn(self.cube_dim, self.ambient_dim, grid.cells, |t| {
                    let mut s = t.to_vec();
                    s[0] = 1.0;
                    self.point(&s)
                })?;
                Ok(Membrane::sampled(grid))
            }
        }
    }
}

/// `t1 -> scale * t1 + shift`, other variables fixed.
fn rescale_first(n: usize, scale: f64, shift: f64) -> Vec<Expr> {
    let mut subs: Vec<Expr> = (0..n).map(Expr::var).collect();
    subs[0] = Expr::add(Expr::mul(Expr::from(scale), Expr::var(0)), Expr::from(shift));
    subs
}

impl Piece {
    fn reparametrized(&self, subs: &[Expr], start: f64, end: f64) -> Piece {
        let map = match &self.map {
            PieceMap::Symbolic(c) => PieceMap::Symbolic(c.iter().map(|e| e.substitute(subs)).collect()),
            sampled => sampled.clone(),
        };
        Piece { start, end, map }
    }

    fn local(&self, t: &[f64]) -> Vec<f64> {
        let mut local = t.to_vec();
        if let PieceMap::Sampled { u0, u1, .. } = self.map {
            let s = (t[0] - self.start) / (self.end - self.start);
            local[0] = u0 + (u1 - u0) * s;
        }
        local
    }

    fn sampled_jacobian(&self, grid: &SampleGrid, t: &[f64], d: usize, n: usize) -> Vec<f64> {
        let PieceMap::Sampled { u0, u1, .. } = self.map else {
            unreachable!()
        };
        let mut out = vec![0.0; d * n];
        grid.interpolate(&grid.jacobian, d * n, &self.local(t), &mut out);
        let chain = (u1 - u0) / (self.end - self.start);
        for r in 0..d {
            out[r * n] *= chain;
        }
        out
    }
}

pub fn cube_names(n: usize) -> Vec<String> {
    if n == 1 {
        vec!["t".to_string()]
    } else {
        coordinate_names("t", n)
    }
}

fn symbolic_pullback(n: usize, comps: &[Expr], form: &DifferentialForm) -> Result<DifferentialForm> {
    let differentials: Vec<DifferentialForm> = comps
        .iter()
        .map(|c| DifferentialForm::from_terms(n, 1, (0..n).map(|a| (vec![a], c.derivative(a)))))
        .collect::<Result<_>>()?;
    let mut out = DifferentialForm::zero(n, form.degree());
    if form.degree() > n {
        return Ok(out);
    }
    for (index, coeff) in form.terms() {
        let mut term = DifferentialForm::scalar(n, coeff.substitute(comps));
        for &i in index {
            term = term.wedge(&differentials[i])?;
        }
        out = out.add(&term)?;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum PulledPiece {
    Symbolic(DifferentialForm),
    Sampled(DifferentialForm),
}

/// A form pulled back to the cube, evaluated componentwise.
#[derive(Debug, Clone)]
pub struct Pullback {
    membrane: Membrane,
    form: DifferentialForm,
    degree: usize,
    pieces: Vec<PulledPiece>,
}

impl Pullback {
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// The pulled-back form itself when the membrane is one symbolic piece.
    pub fn as_form(&self) -> Option<&DifferentialForm> {
        match self.pieces.as_slice() {
            [PulledPiece::Symbolic(f)] => Some(f),
            _ => None,
        }
    }

    /// Coefficient of `dt_{dirs[0]} ^ ... ` (zero-based, increasing).
    pub fn component(&self, dirs: &[usize], t: &[f64]) -> Result<f64> {
        if dirs.len() != self.degree {
            return Err(Error::DegreeMismatch(format!(
                "{}-form has no component with {} directions",
                self.degree,
                dirs.len()
            )));
        }
        let m = &self.membrane;
        m.check_arg(t)?;
        let k = m.piece_index(t[0]);
        match &self.pieces[k] {
            PulledPiece::Symbolic(f) => match f.coefficient_ref(dirs) {
                Some(c) => Ok(c.eval(t)?),
                None => Ok(0.0),
            },
            PulledPiece::Sampled(_) => self.sampled_component(k, dirs, t),
        }
    }

    /// The component `dirs` with its per-piece coefficients resolved once.
    pub fn compile(&self, dirs: &[usize]) -> Result<Component> {
        if dirs.len() != self.degree {
            return Err(Error::DegreeMismatch(format!(
                "{}-form has no component with {} directions",
                self.degree,
                dirs.len()
            )));
        }
        let kernels = self
            .pieces
            .iter()
            .zip(&self.membrane.pieces)
            .map(|(p, piece)| match (p, &piece.map) {
                (PulledPiece::Symbolic(f), PieceMap::Symbolic(comps)) => {
                    let direct = f.coefficient(dirs);
                    if direct.is_zero() {
                        return Kernel::Zero;
                    }
                    let chain = Chain::new(comps, &self.form, dirs);
                    if chain.fits() && chain.size() < direct.size() {
                        Kernel::Chain(chain)
                    } else {
                        Kernel::Direct(direct)
                    }
                }
                _ => Kernel::Sampled,
            })
            .collect();
        Ok(Component {
            pullback: self.clone(),
            dirs: dirs.to_vec(),
            kernels,
        })
    }

    fn sampled_component(&self, k: usize, dirs: &[usize], t: &[f64]) -> Result<f64> {
        let m = &self.membrane;
        match &self.pieces[k] {
            PulledPiece::Symbolic(_) => unreachable!(),
            PulledPiece::Sampled(form) => {
                let piece = &m.pieces[k];
                let PieceMap::Sampled { grid, .. } = &piece.map else {
                    unreachable!()
                };
                let (d, n) = (m.ambient_dim, m.cube_dim);
                let jac = piece.sampled_jacobian(grid, t, d, n);
                let x = m.point(t)?;
                let p = dirs.len();
                let mut total = 0.0;
                for (index, coeff) in form.terms() {
                    let c = coeff.eval(&x)?;
                    if c == 0.0 {
                        continue;
                    }
                    total += c * minor(&jac, n, index, dirs, p);
                }
                Ok(total)
            }
        }
    }

    pub fn membrane(&self) -> &Membrane {
        &self.membrane
    }

    /// All components at `t`, keyed by increasing direction sets.
    pub fn components(&self, t: &[f64]) -> Result<Vec<(MultiIndex, f64)>> {
        subsets(self.membrane.cube_dim, self.degree)
            .into_iter()
            .map(|dirs| {
                let v = self.component(&dirs, t)?;
                Ok((dirs, v))
            })
            .collect()
    }
}

/// One component of a pullback, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Component {
    pullback: Pullback,
    dirs: Vec<usize>,
    kernels: Vec<Kernel>,
}

#[derive(Debug, Clone)]
enum Kernel {
    Zero,
    /// The substituted coefficient.
    Direct(Expr),
    /// Coefficients at `g(t)` times Jacobian minors.
    Chain(Chain),
    Sampled,
}

#[derive(Debug, Clone)]
struct Chain {
    comps: Vec<Expr>,
    /// `dg_r / dt_{dirs[c]}`, row-major `d x p`.
    jac: Vec<Expr>,
    terms: Vec<(MultiIndex, Expr)>,
    p: usize,
}

impl Chain {
    fn new(comps: &[Expr], form: &DifferentialForm, dirs: &[usize]) -> Self {
        let jac = comps
            .iter()
            .flat_map(|c| dirs.iter().map(|&a| c.derivative(a)))
            .collect();
        Chain {
            comps: comps.to_vec(),
            jac,
            terms: form.terms().map(|(i, e)| (i.clone(), e.clone())).collect(),
            p: dirs.len(),
        }
    }

    const MAX_AMBIENT: usize = 16;
    const MAX_JAC: usize = 64;

    fn fits(&self) -> bool {
        self.p <= 8 && self.comps.len() <= Self::MAX_AMBIENT && self.jac.len() <= Self::MAX_JAC
    }

    fn size(&self) -> usize {
        let all = self.comps.iter().chain(&self.jac).chain(self.terms.iter().map(|(_, e)| e));
        all.map(Expr::size).sum()
    }

    fn eval(&self, t: &[f64]) -> Result<f64> {
        let mut x = [0.0; Self::MAX_AMBIENT];
        let mut jac = [0.0; Self::MAX_JAC];
        for (slot, c) in x.iter_mut().zip(&self.comps) {
            *slot = c.eval(t)?;
        }
        for (slot, c) in jac.iter_mut().zip(&self.jac) {
            *slot = c.eval(t)?;
        }
        let cols = [0, 1, 2, 3, 4, 5, 6, 7];
        let mut total = 0.0;
        for (index, coeff) in &self.terms {
            let m = minor(&jac, self.p, index, &cols[..self.p], self.p);
            if m != 0.0 {
                total += coeff.eval(&x[..self.comps.len()])? * m;
            }
        }
        Ok(total)
    }
}

impl Component {
    pub fn eval(&self, t: &[f64]) -> Result<f64> {
        let m = &self.pullback.membrane;
        let k = if m.pieces.len() == 1 { 0 } else { m.piece_index(t[0]) };
        match &self.kernels[k] {
            Kernel::Zero => Ok(0.0),
            Kernel::Direct(e) => Ok(e.eval(t)?),
            Kernel::Chain(c) => c.eval(t),
            Kernel::Sampled => self.pullback.sampled_component(k, &self.dirs, t),
        }
    }
}

fn minor(jac: &[f64], n: usize, rows: &[usize], cols: &[usize], p: usize) -> f64 {
    match p {
        0 => 1.0,
        1 => jac[rows[0] * n + cols[0]],
        2 => {
            jac[rows[0] * n + cols[0]] * jac[rows[1] * n + cols[1]]
                - jac[rows[0] * n + cols[1]] * jac[rows[1] * n + cols[0]]
        }
        _ => DMatrix::from_fn(p, p, |r, c| jac[rows[r] * n + cols[c]]).determinant(),
    }
}

/// Increasing `p`-subsets of `0..n`, in lexicographic order.
pub fn subsets(n: usize, p: usize) -> Vec<MultiIndex> {
    fn go(start: usize, n: usize, p: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if cur.len() == p {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, p, &mut Vec::new(), &mut out);
    out
}

/// Joins `a` then `b`, each at double speed.
pub fn concat_paths(a: &Path, b: &Path, endpoint_tol: f64) -> Result<Path> {
    if a.cube_dim != 1 || b.cube_dim != 1 {
        return Err(Error::DimensionMismatch("concatenation takes paths".into()));
    }
    a.glue(b, endpoint_tol)
}

pub fn glue_membranes(a: &Membrane, b: &Membrane, face_tol: f64) -> Result<Membrane> {
    a.glue(b, face_tol)
}

/// A membrane depending on an extra parameter `u`, the last variable.
#[derive(Debug, Clone, PartialEq)]
pub struct MembraneFamily {
    cube_dim: usize,
    components: Vec<Expr>,
}

impl MembraneFamily {
    pub fn new(cube_dim: usize, components: Vec<Expr>) -> Result<Self> {
        if components.iter().any(|e| e.arity() > cube_dim + 1) {
            return Err(Error::DimensionMismatch(
                "family components read variables beyond t1..tn, u".into(),
            ));
        }
        Ok(Self {
            cube_dim,
            components,
        })
    }

    pub fn parse(cube_dim: usize, components: &[&str]) -> Result<Self> {
        let mut names = cube_names(cube_dim);
        names.push("u".into());
        let exprs = components
            .iter()
            .map(|c| crate::expr::parse(c, &names))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(cube_dim, exprs)
    }

    pub fn slice(&self, u: f64) -> Result<Membrane> {
        let mut subs: Vec<Expr> = (0..self.cube_dim).map(Expr::var).collect();
        subs.push(Expr::from(u));
        Membrane::symbolic(
            self.cube_dim,
            self.components.iter().map(|c| c.substitute(&subs)).collect(),
        )
    }
}
