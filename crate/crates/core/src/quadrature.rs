//! Deterministic quadrature over products of ordered simplices and over
//! the unit interval with running (cumulative) integrals.
//!
//! The product domain is `prod_i {0 < t_i^1 < ... < t_i^{k_i} < 1}`. It is
//! integrated by nesting: `t_i^{k_i}` runs over `[0, 1]`, `t_i^{m}` over
//! `[0, t_i^{m+1}]`. Directions can carry breakpoints where the integrand
//! may jump (the seams of piecewise membranes); every one-dimensional
//! interval is split there and each piece gets its own rule.
//!
//! Every result is computed at `refinement_levels` successively doubled
//! resolutions. For the closed Newton-Cotes rules the last two levels are
//! combined by Richardson extrapolation; for Gauss-Legendre the finest
//! level is returned. The difference between levels is the error estimate.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default for [`QuadratureConfig::abs_tol`].
pub const ABS_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Trapezoid,
    Simpson,
    Gauss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Subintervals per piece (trapezoid/simpson) or nodes per panel (gauss).
    pub points_per_axis: usize,
    pub rule: Rule,
    pub refinement_levels: usize,
    pub rel_tol: f64,
    /// Added to `rel_tol * |value|` when judging convergence, so integrals
    /// that cancel to zero can converge.
    pub abs_tol: f64,
    /// Upper bound on the total number of cut variables.
    pub max_total_cuts: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            points_per_axis: 64,
            rule: Rule::Simpson,
            refinement_levels: 2,
            rel_tol: 1e-6,
            abs_tol: ABS_FLOOR,
            max_total_cuts: 6,
        }
    }
}

impl QuadratureConfig {
    /// Gauss-Legendre with 6 nodes per panel, one then two panels.
    /// Nested simplex integrals cost `nodes^(sum k)`, so membrane integrals
    /// use this instead of the composite Simpson default.
    pub fn gauss() -> Self {
        Self {
            points_per_axis: 6,
            rule: Rule::Gauss,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points_per_axis < 4 {
            return Err(Error::Config("points_per_axis must be at least 4".into()));
        }
        if self.rule == Rule::Simpson && self.points_per_axis % 2 != 0 {
            return Err(Error::Config(
                "simpson needs an even number of subintervals".into(),
            ));
        }
        if self.rule == Rule::Gauss && self.points_per_axis > 64 {
            return Err(Error::Config("at most 64 gauss nodes per panel".into()));
        }
        if self.refinement_levels == 0 {
            return Err(Error::Config("refinement_levels must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Config("rel_tol must be positive".into()));
        }
        if !(self.abs_tol >= 0.0) {
            return Err(Error::Config("abs_tol must be non-negative".into()));
        }
        Ok(())
    }

    fn richardson_order(&self) -> Option<i32> {
        match self.rule {
            Rule::Trapezoid => Some(2),
            Rule::Simpson => Some(4),
            Rule::Gauss => None,
        }
    }

    /// Combines per-level values into an estimate.
    pub fn extrapolate(&self, levels: &[f64]) -> Estimate {
        let finest = *levels.last().expect("at least one level");
        if levels.len() < 2 {
            return Estimate {
                value: finest,
                error: None,
            };
        }
        let coarse = levels[levels.len() - 2];
        match self.richardson_order() {
            Some(p) => {
                let factor = f64::from(2i32.pow(p as u32) - 1);
                let correction = (finest - coarse) / factor;
                Estimate {
                    value: finest + correction,
                    error: Some(correction.abs()),
                }
            }
            None => Estimate {
                value: finest,
                error: Some((finest - coarse).abs()),
            },
        }
    }

    /// Fails with [`Error::NonConvergence`] when the estimate is too large.
    pub fn check(&self, estimate: Estimate) -> Result<Estimate> {
        if let Some(err) = estimate.error {
            if !(err <= self.rel_tol * estimate.value.abs() + self.abs_tol) {
                return Err(Error::NonConvergence {
                    value: estimate.value,
                    estimate: err,
                });
            }
        }
        Ok(estimate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    /// `None` when only one refinement level was computed.
    pub error: Option<f64>,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            error: Some(0.0),
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn cached_gauss(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static TABLE: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    &TABLE.get_or_init(|| (0..=64).map(gauss_legendre).collect())[n]
}

/// A one-dimensional rule on `[0, 1]`: node positions, weights, and for each
/// node whether it sits on the left or right end of the interval.
#[derive(Debug, Clone)]
struct UnitRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl UnitRule {
    fn new(cfg: &QuadratureConfig, level: usize) -> Self {
        let scale = 1usize << level;
        match cfg.rule {
            Rule::Trapezoid | Rule::Simpson => {
                let n = cfg.points_per_axis * scale;
                let h = 1.0 / n as f64;
                let nodes = (0..=n).map(|i| i as f64 * h).collect();
                let weights = (0..=n)
                    .map(|i| match cfg.rule {
                        Rule::Trapezoid if i == 0 || i == n => h / 2.0,
                        Rule::Trapezoid => h,
                        _ if i == 0 || i == n => h / 3.0,
                        _ if i % 2 == 1 => 4.0 * h / 3.0,
                        _ => 2.0 * h / 3.0,
                    })
                    .collect();
                Self { nodes, weights }
            }
            Rule::Gauss => {
                let (gx, gw) = cached_gauss(cfg.points_per_axis);
                let panel = 1.0 / scale as f64;
                let mut nodes = Vec::with_capacity(gx.len() * scale);
                let mut weights = Vec::with_capacity(gx.len() * scale);
                for p in 0..scale {
                    let a = p as f64 * panel;
                    for (x, w) in gx.iter().zip(gw) {
                        nodes.push(a + 0.5 * panel * (x + 1.0));
                        weights.push(0.5 * panel * w);
                    }
                }
                Self { nodes, weights }
            }
        }
    }

    /// Calls `f(x, w)` for the rule mapped onto `[0, upper]`, split at the
    /// breakpoints inside. Nodes on a split point are nudged into their own
    /// piece so one-sided limits are sampled.
    fn for_each<F>(&self, upper: f64, breaks: &[f64], mut f: F) -> Result<()>
    where
        F: FnMut(f64, f64) -> Result<()>,
    {
        let mut a = 0.0;
        let mut inner = breaks.iter().copied().filter(|&b| b > 0.0 && b < upper);
        loop {
            let b = inner.next().unwrap_or(upper);
            let len = b - a;
            if len > 0.0 {
                let nudge = 1e-13 * len;
                for (x, w) in self.nodes.iter().zip(&self.weights) {
                    let mut pos = a + len * x;
                    if *x == 0.0 && a > 0.0 {
                        pos += nudge;
                    } else if *x == 1.0 && b < upper {
                        pos -= nudge;
                    }
                    f(pos, len * w)?;
                }
            }
            if b >= upper {
                return Ok(());
            }
            a = b;
        }
    }
}

/// A factor of a product integrand, reading the listed variables.
pub struct Factor<'a> {
    pub vars: Vec<usize>,
    pub eval: Box<dyn Fn(&[f64]) -> Result<f64> + Send + Sync + 'a>,
}

impl<'a> Factor<'a> {
    pub fn new<F>(vars: Vec<usize>, eval: F) -> Self
    where
        F: Fn(&[f64]) -> Result<f64> + Send + Sync + 'a,
    {
        Self {
            vars,
            eval: Box::new(eval),
        }
    }
}

/// Layout of the cut variables: direction-major, `t_i^1 .. t_i^{k_i}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderedLayout {
    cuts: Vec<usize>,
    offsets: Vec<usize>,
}

impl OrderedLayout {
    pub fn new(cuts: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(cuts.len());
        let mut acc = 0;
        for &k in cuts {
            offsets.push(acc);
            acc += k;
        }
        Self {
            cuts: cuts.to_vec(),
            offsets,
        }
    }

    pub fn total(&self) -> usize {
        self.cuts.iter().sum()
    }

    /// Variable id of `t_direction^position`, `position` in `1..=k`.
    pub fn id(&self, direction: usize, position: usize) -> usize {
        debug_assert!(position >= 1 && position <= self.cuts[direction]);
        self.offsets[direction] + position - 1
    }

    fn locate(&self, id: usize) -> (usize, usize) {
        for (dir, (&off, &k)) in self.offsets.iter().zip(&self.cuts).enumerate() {
            if id < off + k {
                return (dir, id - off + 1);
            }
        }
        unreachable!("variable id out of range")
    }
}

/// Integrates `f` over the product of ordered simplices with cut counts
/// `cuts`. `f` receives the variables in [`OrderedLayout`] order.
pub fn integrate_ordered<F>(cuts: &[usize], f: F, cfg: &QuadratureConfig) -> Result<Estimate>
where
    F: Fn(&[f64]) -> Result<f64> + Send + Sync,
{
    let all: Vec<usize> = (0..cuts.iter().sum()).collect();
    let breaks = vec![Vec::new(); cuts.len()];
    integrate_factored(cuts, &breaks, &[Factor::new(all, f)], cfg)
}

/// Integrates `f` over the unit cube `[0,1]^dim`.
pub fn integrate_cube<F>(dim: usize, f: F, cfg: &QuadratureConfig) -> Result<Estimate>
where
    F: Fn(&[f64]) -> Result<f64> + Send + Sync,
{
    integrate_ordered(&vec![1; dim], f, cfg)
}

/// Integrates a product of factors over the ordered domain, splitting each
/// direction at its `breakpoints`.
pub fn integrate_factored(
    cuts: &[usize],
    breakpoints: &[Vec<f64>],
    factors: &[Factor<'_>],
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    cfg.validate()?;
    let layout = OrderedLayout::new(cuts);
    let total = layout.total();
    if total > cfg.max_total_cuts {
        return Err(Error::Config(format!(
            "{total} cut variables exceed the configured maximum {}",
            cfg.max_total_cuts
        )));
    }
    if breakpoints.len() != cuts.len() {
        return Err(Error::DimensionMismatch(
            "one breakpoint list per direction is required".into(),
        ));
    }
    for f in factors {
        if f.vars.iter().any(|&v| v >= total) {
            return Err(Error::Invalid("factor reads a variable outside the domain".into()));
        }
    }
    let order = nesting_order(&layout, factors);
    let mut completes: Vec<Vec<usize>> = vec![Vec::new(); total + 1];
    for (fi, f) in factors.iter().enumerate() {
        let depth = f
            .vars
            .iter()
            .map(|v| order.iter().position(|o| o == v).unwrap() + 1)
            .max()
            .unwrap_or(0);
        completes[depth].push(fi);
    }
    let nest = Nest {
        layout: &layout,
        order: &order,
        breakpoints,
        factors,
        completes: &completes,
    };
    let mut levels = Vec::with_capacity(cfg.refinement_levels);
    for level in 0..cfg.refinement_levels {
        let rule = UnitRule::new(cfg, level);
        levels.push(nest.run(&rule)?);
    }
    cfg.check(cfg.extrapolate(&levels))
}

struct Nest<'a, 'f> {
    layout: &'a OrderedLayout,
    order: &'a [usize],
    breakpoints: &'a [Vec<f64>],
    factors: &'a [Factor<'f>],
    completes: &'a [Vec<usize>],
}

impl Nest<'_, '_> {
    fn run(&self, rule: &UnitRule) -> Result<f64> {
        let total = self.order.len();
        let vars = vec![0.0; total];
        let mut partial = 1.0;
        for &fi in &self.completes[0] {
            partial *= (self.factors[fi].eval)(&vars)?;
        }
        if partial == 0.0 || total == 0 {
            return Ok(partial);
        }
        // Outermost variable in parallel; summed in node order.
        let (dir, _) = self.layout.locate(self.order[0]);
        let mut points = Vec::new();
        rule.for_each(1.0, &self.breakpoints[dir], |x, w| {
            points.push((x, w));
            Ok(())
        })?;
        let parts: Vec<Result<f64>> = points
            .par_iter()
            .map(|&(x, w)| {
                let mut vars = vec![0.0; total];
                vars[self.order[0]] = x;
                let p = self.apply(1, &vars, partial)?;
                if p == 0.0 {
                    return Ok(0.0);
                }
                Ok(w * self.descend(rule, 1, &mut vars, p)?)
            })
            .collect();
        let mut sum = 0.0;
        for part in parts {
            sum += part?;
        }
        Ok(sum)
    }

    fn apply(&self, depth: usize, vars: &[f64], mut partial: f64) -> Result<f64> {
        for &fi in &self.completes[depth] {
            partial *= (self.factors[fi].eval)(vars)?;
            if partial == 0.0 {
                break;
            }
        }
        Ok(partial)
    }

    fn descend(&self, rule: &UnitRule, depth: usize, vars: &mut [f64], partial: f64) -> Result<f64> {
        if depth == self.order.len() {
            return Ok(partial);
        }
        let var = self.order[depth];
        let (dir, pos) = self.layout.locate(var);
        let upper = if pos == self.layout.cuts[dir] {
            1.0
        } else {
            vars[self.layout.id(dir, pos + 1)]
        };
        let mut sum = 0.0;
        rule.for_each(upper, &self.breakpoints[dir], |x, w| {
            vars[var] = x;
            let p = self.apply(depth + 1, vars, partial)?;
            if p != 0.0 {
                sum += w * self.descend(rule, depth + 1, vars, p)?;
            }
            Ok(())
        })?;
        Ok(sum)
    }
}

/// Chooses an interleaving of the per-direction chains `k_i, ..., 1` that
/// lets factors complete as early as possible.
fn nesting_order(layout: &OrderedLayout, factors: &[Factor<'_>]) -> Vec<usize> {
    let chains: Vec<Vec<usize>> = (0..layout.cuts.len())
        .map(|d| (1..=layout.cuts[d]).rev().map(|m| layout.id(d, m)).collect())
        .collect();
    let direction_major: Vec<usize> = chains.iter().flatten().copied().collect();
    if factors.len() <= 1 || layout.cuts.len() <= 1 {
        return direction_major;
    }
    let cost = |order: &[usize]| -> f64 {
        factors
            .iter()
            .map(|f| {
                let depth = f
                    .vars
                    .iter()
                    .map(|v| order.iter().position(|o| o == v).unwrap() + 1)
                    .max()
                    .unwrap_or(0);
                8f64.powi(depth as i32)
            })
            .sum()
    };
    let mut best = direction_major.clone();
    let mut best_cost = cost(&best);
    let mut heads = vec![0usize; chains.len()];
    let mut current = Vec::with_capacity(direction_major.len());
    let mut budget = 20_000usize;
    interleave(&chains, &mut heads, &mut current, &mut budget, &mut |order| {
        let c = cost(order);
        if c < best_cost {
            best_cost = c;
            best = order.to_vec();
        }
    });
    best
}

fn interleave(
    chains: &[Vec<usize>],
    heads: &mut [usize],
    current: &mut Vec<usize>,
    budget: &mut usize,
    visit: &mut dyn FnMut(&[usize]),
) {
    if *budget == 0 {
        return;
    }
    if heads.iter().zip(chains).all(|(&h, c)| h == c.len()) {
        *budget -= 1;
        visit(current);
        return;
    }
    for d in 0..chains.len() {
        if heads[d] < chains[d].len() {
            current.push(chains[d][heads[d]]);
            heads[d] += 1;
            interleave(chains, heads, current, budget, visit);
            heads[d] -= 1;
            current.pop();
        }
    }
}

/// Nodes on `[0, 1]` with cumulative-integration weights, split into pieces
/// at breakpoints. Piece boundaries appear twice (once per side), so
/// integrands with jumps there are handled exactly.
#[derive(Debug, Clone)]
pub struct LineGrid {
    rule: Rule,
    nodes: Vec<f64>,
    /// `(first node, node count, start, end)` per piece.
    pieces: Vec<(usize, usize, f64, f64)>,
    /// Gauss only: nodes per panel and panels per piece.
    panel_nodes: usize,
    panels: usize,
    gauss_weights: Vec<f64>,
    gauss_running: Vec<Vec<f64>>,
}

impl LineGrid {
    pub fn new(breakpoints: &[f64], cfg: &QuadratureConfig, level: usize) -> Result<Self> {
        cfg.validate()?;
        let mut edges = vec![0.0];
        edges.extend(breakpoints.iter().copied().filter(|&b| b > 0.0 && b < 1.0));
        edges.push(1.0);
        edges.dedup();
        let mut grid = LineGrid {
            rule: cfg.rule,
            nodes: Vec::new(),
            pieces: Vec::new(),
            panel_nodes: 0,
            panels: 0,
            gauss_weights: Vec::new(),
            gauss_running: Vec::new(),
        };
        let scale = 1usize << level;
        if cfg.rule == Rule::Gauss {
            let q = cfg.points_per_axis;
            let (gx, gw) = cached_gauss(q);
            grid.panel_nodes = q;
            grid.panels = scale;
            grid.gauss_weights = gw.iter().map(|w| w / 2.0).collect();
            // running[a][b] = integral over [-1, x_a] of the b-th Lagrange
            // basis polynomial, mapped to a unit-length panel.
            grid.gauss_running = (0..q)
                .map(|a| {
                    let half = (gx[a] + 1.0) / 2.0;
                    (0..q)
                        .map(|b| {
                            gx.iter()
                                .zip(gw)
                                .map(|(s, w)| {
                                    let x = -1.0 + half * (s + 1.0);
                                    w * half * lagrange(gx, b, x)
                                })
                                .sum::<f64>()
                                / 2.0
                        })
                        .collect()
                })
                .collect();
        }
        for win in edges.windows(2) {
            let (a, b) = (win[0], win[1]);
            let first = grid.nodes.len();
            let len = b - a;
            let nudge = 1e-13 * len;
            match cfg.rule {
                Rule::Gauss => {
                    let (gx, _) = cached_gauss(cfg.points_per_axis);
                    let panel = len / scale as f64;
                    for p in 0..scale {
                        for x in gx {
                            grid.nodes.push(a + panel * (p as f64 + (x + 1.0) / 2.0));
                        }
                    }
                }
                _ => {
                    let n = cfg.points_per_axis * scale;
                    for i in 0..=n {
                        let mut x = a + len * i as f64 / n as f64;
                        if i == 0 && a > 0.0 {
                            x += nudge;
                        } else if i == n && b < 1.0 {
                            x -= nudge;
                        }
                        grid.nodes.push(x);
                    }
                }
            }
            grid.pieces.push((first, grid.nodes.len() - first, a, b));
        }
        Ok(grid)
    }

    /// Evaluation points, in order.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Running integral from 0 to each node.
    pub fn cumulative(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.nodes.len());
        let mut out = vec![0.0; values.len()];
        let mut carry = 0.0;
        for &(first, count, a, b) in &self.pieces {
            let v = &values[first..first + count];
            let o = &mut out[first..first + count];
            let len = b - a;
            match self.rule {
                Rule::Trapezoid => {
                    let h = len / (count - 1) as f64;
                    o[0] = carry;
                    for i in 1..count {
                        o[i] = o[i - 1] + h * (v[i - 1] + v[i]) / 2.0;
                    }
                    carry = o[count - 1];
                }
                Rule::Simpson => {
                    let h = len / (count - 1) as f64;
                    o[0] = carry;
                    let mut i = 0;
                    while i + 2 < count {
                        let (f0, f1, f2) = (v[i], v[i + 1], v[i + 2]);
                        o[i + 1] = o[i] + h * (5.0 * f0 + 8.0 * f1 - f2) / 12.0;
                        o[i + 2] = o[i] + h * (f0 + 4.0 * f1 + f2) / 3.0;
                        i += 2;
                    }
                    carry = o[count - 1];
                }
                Rule::Gauss => {
                    let q = self.panel_nodes;
                    let panel = len / self.panels as f64;
                    for p in 0..self.panels {
                        let pv = &v[p * q..(p + 1) * q];
                        for a_idx in 0..q {
                            let s: f64 = self.gauss_running[a_idx]
                                .iter()
                                .zip(pv)
                                .map(|(r, f)| r * f)
                                .sum();
                            o[p * q + a_idx] = carry + panel * s;
                        }
                        carry += panel
                            * self
                                .gauss_weights
                                .iter()
                                .zip(pv)
                                .map(|(w, f)| w * f)
                                .sum::<f64>();
                    }
                }
            }
        }
        out
    }

    /// Integral over `[0, 1]`.
    pub fn total(&self, values: &[f64]) -> f64 {
        match self.rule {
            Rule::Gauss => {
                let q = self.panel_nodes;
                let mut sum = 0.0;
                for &(first, count, a, b) in &self.pieces {
                    let panel = (b - a) / self.panels as f64;
                    for chunk in values[first..first + count].chunks(q) {
                        sum += panel
                            * self
                                .gauss_weights
                                .iter()
                                .zip(chunk)
                                .map(|(w, f)| w * f)
                                .sum::<f64>();
                    }
                }
                sum
            }
            _ => *self.cumulative(values).last().unwrap_or(&0.0),
        }
    }
}

fn lagrange(nodes: &[f64], b: usize, x: f64) -> f64 {
    nodes
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != b)
        .map(|(_, &xi)| (x - xi) / (nodes[b] - xi))
        .product()
}

/// Iterated integral `int_{0<s_1<...<s_k<1} prod f_{word[j]}(s_j)` of scalar
/// functions, by running integrals on a [`LineGrid`].
pub fn iterated_line_integral<F>(
    funcs: &[F],
    word: &[usize],
    breakpoints: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Estimate>
where
    F: Fn(f64) -> Result<f64>,
{
    if word.is_empty() {
        return Ok(Estimate::exact(1.0));
    }
    let mut levels = Vec::with_capacity(cfg.refinement_levels);
    for level in 0..cfg.refinement_levels {
        let grid = LineGrid::new(breakpoints, cfg, level)?;
        let tables: Vec<Vec<f64>> = funcs
            .iter()
            .map(|f| grid.nodes().iter().map(|&s| f(s)).collect())
            .collect::<Result<_>>()?;
        let mut running = vec![1.0; grid.nodes().len()];
        for (pos, &letter) in word.iter().enumerate() {
            let product: Vec<f64> = running
                .iter()
                .zip(&tables[letter])
                .map(|(r, f)| r * f)
                .collect();
            if pos + 1 == word.len() {
                levels.push(grid.total(&product));
            } else {
                running = grid.cumulative(&product);
            }
        }
    }
    cfg.check(cfg.extrapolate(&levels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(points: usize) -> QuadratureConfig {
        QuadratureConfig {
            points_per_axis: points,
            ..QuadratureConfig::default()
        }
    }

    #[test]
    fn gauss_nodes_integrate_polynomials_exactly() {
        for n in 1..=12 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn simplex_volumes() {
        let one = |_: &[f64]| Ok(1.0);
        let cfg = QuadratureConfig::default();
        let v = integrate_ordered(&[1], one, &cfg).unwrap().value;
        assert!((v - 1.0).abs() < 1e-14);
        let v = integrate_ordered(&[2], one, &cfg).unwrap().value;
        assert!((v - 0.5).abs() < 1e-14);
        let v = integrate_ordered(&[2, 1], one, &cfg).unwrap().value;
        assert!((v - 0.5).abs() < 1e-14);
        let v = integrate_ordered(&[3], one, &QuadratureConfig::gauss()).unwrap().value;
        assert!((v - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn empty_domain_is_a_point() {
        let v = integrate_ordered(&[0, 0], |_| Ok(3.5), &QuadratureConfig::default()).unwrap();
        assert_eq!(v.value, 3.5);
    }

    #[test]
    fn cubic_integrands_match_closed_forms() {
        // int_{0<a<b<1} a^2 b = 1/15 ; int_{0<a<1} a^3 = 1/4
        let cfg = simpson(16);
        let v = integrate_ordered(&[2], |t| Ok(t[0] * t[0] * t[1]), &cfg).unwrap().value;
        assert!((v - 1.0 / 15.0).abs() <= 1e-8 / 15.0);
        // int over {a<b} x {c}: a * c^2 = (1/6)(1/3)
        let v = integrate_ordered(&[2, 1], |t| Ok(t[0] * t[2] * t[2]), &cfg)
            .unwrap()
            .value;
        assert!((v - 1.0 / 18.0).abs() <= 1e-8 / 18.0);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = QuadratureConfig::default();
        cfg.points_per_axis = 15;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.points_per_axis = 2;
        assert!(cfg.validate().is_err());
        let cfg = QuadratureConfig {
            max_total_cuts: 2,
            ..QuadratureConfig::default()
        };
        assert!(integrate_ordered(&[3], |_| Ok(1.0), &cfg).is_err());
    }

    #[test]
    fn non_convergence_is_reported() {
        let cfg = QuadratureConfig {
            points_per_axis: 4,
            rel_tol: 1e-12,
            ..QuadratureConfig::default()
        };
        let err = integrate_ordered(&[1], |t| Ok((40.0 * t[0]).sin()), &cfg).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn breakpoints_handle_jumps() {
        // integrand 1 on t <= 1/2, 3 after
        let f = Factor::new(vec![0], |t: &[f64]| Ok(if t[0] <= 0.5 { 1.0 } else { 3.0 }));
        for cfg in [QuadratureConfig::default(), QuadratureConfig::gauss()] {
            let v = integrate_factored(&[1], &[vec![0.5]], std::slice::from_ref(&f), &cfg)
                .unwrap()
                .value;
            assert!((v - 2.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn factor_scheduling_matches_single_factor() {
        let cfg = QuadratureConfig::gauss();
        let layout = OrderedLayout::new(&[2, 2]);
        let (a1, a2) = (layout.id(0, 1), layout.id(0, 2));
        let (b1, b2) = (layout.id(1, 1), layout.id(1, 2));
        let whole = integrate_ordered(
            &[2, 2],
            |t| Ok((t[a1] + t[b2]).cos() * (1.0 + t[a2] * t[b1])),
            &cfg,
        )
        .unwrap()
        .value;
        let factors = [
            Factor::new(vec![a1, b2], move |t: &[f64]| Ok((t[a1] + t[b2]).cos())),
            Factor::new(vec![a2, b1], move |t: &[f64]| Ok(1.0 + t[a2] * t[b1])),
        ];
        let split = integrate_factored(&[2, 2], &[vec![], vec![]], &factors, &cfg)
            .unwrap()
            .value;
        assert!((whole - split).abs() < 1e-13);
    }

    #[test]
    fn running_integrals() {
        // int_{s1<s2} s1 * cos(s2)
        let exact = {
            // int_0^1 cos(s) s^2/2 ds
            let s: f64 = 1.0;
            (s * s * s.sin() + 2.0 * s * s.cos() - 2.0 * s.sin()) / 2.0
        };
        let funcs = [|s: f64| Ok(s), |s: f64| Ok(s.cos())];
        for cfg in [
            QuadratureConfig::default(),
            QuadratureConfig::gauss(),
            QuadratureConfig {
                rule: Rule::Trapezoid,
                points_per_axis: 256,
                refinement_levels: 3,
                ..QuadratureConfig::default()
            },
        ] {
            let v = iterated_line_integral(&funcs, &[0, 1], &[], &cfg).unwrap().value;
            assert!((v - exact).abs() < 1e-10, "{:?}: {v} vs {exact}", cfg.rule);
            let v = iterated_line_integral(&funcs, &[0, 1], &[0.25, 0.5], &cfg)
                .unwrap()
                .value;
            assert!((v - exact).abs() < 1e-10, "{:?} pieces: {v} vs {exact}", cfg.rule);
        }
    }
}
