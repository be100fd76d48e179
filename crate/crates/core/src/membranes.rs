//! Iterated integrals over membranes.
//!
//! A [`LabeledIntegrand`] on the n-cube has cut counts `k = (k_1..k_n)` and
//! a slot for every grid index `j` with `0 <= j_i <= k_i + 1`. Slot `j`
//! holds a form `w_j` and a list `J_j` of directions it consumes. Writing
//! `t^j = (t_1^{j_1}, ..., t_n^{j_n})` with `t_i^0 = 0` and
//! `t_i^{k_i+1} = 1`, the integral is
//!
//! ```text
//!   int_D  prod_j  sign(J_j) * a_j(sorted J_j; t^j)  dt
//! ```
//!
//! over `D = prod_i {0 < t_i^1 < ... < t_i^{k_i} < 1}`, where `a_j(J; t)` is
//! the `dt_J` coefficient of `g^* w_j` and `sign(J_j)` is the parity of the
//! listed order of `J_j`. Every interior `dt_i^{j_i}` must be consumed by
//! exactly one slot, and a slot may not consume a direction in which it
//! sits on the boundary.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forms::{sort_sign, DifferentialForm};
use crate::geometry::{glue_membranes, Component, Membrane};
use crate::quadrature::{integrate_factored, iterated_line_integral, Estimate, Factor, OrderedLayout, QuadratureConfig};
use crate::report::{Check, Tolerance};
use crate::shuffles::{enumerate_product, enumerate_sh1, enumerate_shn, is_block_shuffle, shn_blocks, unbar, Permutation, ProductShuffle};

/// Why a labeled integrand fails the admissibility rules. Directions and
/// cut indices are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Unconsumed { direction: usize, index: usize },
    Duplicate { direction: usize, index: usize },
    BoundaryDirection { slot: Vec<usize>, direction: usize },
    SlotOutOfRange { slot: Vec<usize> },
    DirectionOutOfRange { slot: Vec<usize>, direction: usize },
    Degree { slot: Vec<usize>, degree: usize, expected: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Unconsumed { direction, index } => {
                write!(f, "dt_{direction}^{index} is not consumed by any slot")
            }
            Violation::Duplicate { direction, index } => {
                write!(f, "dt_{direction}^{index} is consumed more than once")
            }
            Violation::BoundaryDirection { slot, direction } => write!(
                f,
                "slot {slot:?} sits on the boundary in direction {direction} but lists it"
            ),
            Violation::SlotOutOfRange { slot } => write!(f, "slot {slot:?} is outside the grid"),
            Violation::DirectionOutOfRange { slot, direction } => {
                write!(f, "slot {slot:?} lists direction {direction} outside the cube")
            }
            Violation::Degree { slot, degree, expected } => write!(
                f,
                "slot {slot:?} carries a {degree}-form but consumes {expected} directions"
            ),
        }
    }
}

/// Restricts a slot to evaluation points whose first coordinate lies in
/// an interval; outside it the slot contributes zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
    pub closed_lo: bool,
    pub closed_hi: bool,
}

impl Support {
    /// `[0, 1/2]`
    pub const FIRST_HALF: Support = Support {
        lo: 0.0,
        hi: 0.5,
        closed_lo: true,
        closed_hi: true,
    };
    /// `(1/2, 1]`
    pub const SECOND_HALF: Support = Support {
        lo: 0.5,
        hi: 1.0,
        closed_lo: false,
        closed_hi: true,
    };

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.closed_lo { x >= self.lo } else { x > self.lo };
        let below = if self.closed_hi { x <= self.hi } else { x < self.hi };
        above && below
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub form: DifferentialForm,
    /// Consumed directions, zero-based, in listed order.
    pub directions: Vec<usize>,
    pub support: Option<Support>,
}

impl Slot {
    pub fn new(form: DifferentialForm, directions: Vec<usize>) -> Self {
        Self {
            form,
            directions,
            support: None,
        }
    }

    fn is_trivial(&self) -> bool {
        self.directions.is_empty() && self.support.is_none() && self.form.is_unit()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledIntegrand {
    cube_dim: usize,
    cuts: Vec<usize>,
    slots: BTreeMap<Vec<usize>, Slot>,
}

impl LabeledIntegrand {
    /// No slots yet; every index holds the unit 0-form.
    pub fn new(cuts: Vec<usize>) -> Self {
        Self {
            cube_dim: cuts.len(),
            cuts,
            slots: BTreeMap::new(),
        }
    }

    pub fn with_slot(mut self, j: Vec<usize>, form: DifferentialForm, directions: Vec<usize>) -> Self {
        self.slots.insert(j, Slot::new(form, directions));
        self
    }

    pub fn insert(&mut self, j: Vec<usize>, slot: Slot) {
        self.slots.insert(j, slot);
    }

    pub fn cube_dim(&self) -> usize {
        self.cube_dim
    }

    pub fn cuts(&self) -> &[usize] {
        &self.cuts
    }

    pub fn slots(&self) -> &BTreeMap<Vec<usize>, Slot> {
        &self.slots
    }

    pub fn slot(&self, j: &[usize]) -> Option<&Slot> {
        self.slots.get(j)
    }

    /// Grid, boundary and exactly-once rules, without degrees.
    pub fn validate_structure(&self) -> std::result::Result<(), Violation> {
        let n = self.cube_dim;
        let mut count: Vec<Vec<usize>> = self.cuts.iter().map(|&k| vec![0; k + 2]).collect();
        for (j, slot) in &self.slots {
            if j.len() != n || j.iter().zip(&self.cuts).any(|(&ji, &k)| ji > k + 1) {
                return Err(Violation::SlotOutOfRange { slot: j.clone() });
            }
            for &i in &slot.directions {
                if i >= n {
                    return Err(Violation::DirectionOutOfRange {
                        slot: j.clone(),
                        direction: i + 1,
                    });
                }
                if j[i] == 0 || j[i] == self.cuts[i] + 1 {
                    return Err(Violation::BoundaryDirection {
                        slot: j.clone(),
                        direction: i + 1,
                    });
                }
                count[i][j[i]] += 1;
            }
        }
        for i in 0..n {
            for idx in 1..=self.cuts[i] {
                match count[i][idx] {
                    0 => return Err(Violation::Unconsumed { direction: i + 1, index: idx }),
                    1 => {}
                    _ => return Err(Violation::Duplicate { direction: i + 1, index: idx }),
                }
            }
        }
        Ok(())
    }

    /// All admissibility rules, including `deg w_j = |J_j|`.
    pub fn validate(&self) -> std::result::Result<(), Violation> {
        self.validate_structure()?;
        for (j, slot) in &self.slots {
            if slot.form.degree() != slot.directions.len() {
                return Err(Violation::Degree {
                    slot: j.clone(),
                    degree: slot.form.degree(),
                    expected: slot.directions.len(),
                });
            }
        }
        Ok(())
    }
}

enum Coord {
    Fixed(f64),
    Var(usize),
}

/// One factor of the product integrand: a pullback component at `t^j`.
/// Largest cube dimension the integrators accept.
pub const MAX_CUBE_DIM: usize = 8;

fn check_cube_dim(g: &Membrane) -> Result<()> {
    if g.cube_dim() > MAX_CUBE_DIM {
        return Err(Error::Invalid(format!(
            "cube dimension {} exceeds the supported {MAX_CUBE_DIM}",
            g.cube_dim()
        )));
    }
    Ok(())
}

struct SlotPlan {
    component: Arc<Component>,
    sign: f64,
    coords: Vec<Coord>,
    support: Option<Support>,
}

impl SlotPlan {
    fn vars(&self) -> Vec<usize> {
        self.coords
            .iter()
            .filter_map(|c| match c {
                Coord::Var(v) => Some(*v),
                Coord::Fixed(_) => None,
            })
            .collect()
    }

    fn eval(&self, vars: &[f64]) -> Result<f64> {
        let mut buf = [0.0; MAX_CUBE_DIM];
        let t = &mut buf[..self.coords.len()];
        for (x, c) in t.iter_mut().zip(&self.coords) {
            *x = match *c {
                Coord::Fixed(x) => x,
                Coord::Var(v) => vars[v],
            };
        }
        if let Some(s) = &self.support {
            if !s.contains(t[0]) {
                return Ok(0.0);
            }
        }
        Ok(self.sign * self.component.eval(t)?)
    }
}

fn coords_for(layout: &OrderedLayout, cuts: &[usize], j: &[usize]) -> Vec<Coord> {
    j.iter()
        .enumerate()
        .map(|(i, &ji)| {
            if ji == 0 {
                Coord::Fixed(0.0)
            } else if ji == cuts[i] + 1 {
                Coord::Fixed(1.0)
            } else {
                Coord::Var(layout.id(i, ji))
            }
        })
        .collect()
}

fn listed_sign(directions: &[usize]) -> Result<(f64, Vec<usize>)> {
    sort_sign(directions).ok_or_else(|| Error::Invalid(format!("repeated direction in {directions:?}")))
}

fn integrate_plans(
    g: &Membrane,
    cuts: &[usize],
    plans: Vec<SlotPlan>,
    extra_breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Estimate> {
    check_cube_dim(g)?;
    let mut breakpoints = vec![Vec::new(); cuts.len()];
    if !cuts.is_empty() {
        let mut first = g.breakpoints();
        first.extend_from_slice(extra_breaks);
        for p in &plans {
            if let Some(s) = p.support {
                first.push(s.lo);
                first.push(s.hi);
            }
        }
        first.sort_by(f64::total_cmp);
        first.dedup();
        breakpoints[0] = first;
    }
    let factors: Vec<Factor<'_>> = plans
        .iter()
        .map(|p| Factor::new(p.vars(), move |v: &[f64]| p.eval(v)))
        .collect();
    integrate_factored(cuts, &breakpoints, &factors, cfg)
}

fn check_dims(g: &Membrane, integrand: &LabeledIntegrand) -> Result<()> {
    if g.cube_dim() != integrand.cube_dim {
        return Err(Error::DimensionMismatch(format!(
            "integrand on a {}-cube over a {}-membrane",
            integrand.cube_dim,
            g.cube_dim()
        )));
    }
    Ok(())
}

/// The membrane iterated integral of `integrand` along `g`.
pub fn integrate_membrane(g: &Membrane, integrand: &LabeledIntegrand, cfg: &QuadratureConfig) -> Result<Estimate> {
    check_dims(g, integrand)?;
    integrand.validate().map_err(Error::Integrand)?;
    let layout = OrderedLayout::new(&integrand.cuts);
    let mut plans = Vec::new();
    for (j, slot) in &integrand.slots {
        if slot.is_trivial() {
            continue;
        }
        let (sign, dirs) = listed_sign(&slot.directions)?;
        plans.push(SlotPlan {
            component: Arc::new(g.pullback(&slot.form)?.compile(&dirs)?),
            sign,
            coords: coords_for(&layout, &integrand.cuts, j),
            support: slot.support,
        });
    }
    integrate_plans(g, &integrand.cuts, plans, &[], cfg)
}

/// Places `slot` at `j`, wedging with anything already there.
fn place(slots: &mut BTreeMap<Vec<usize>, Slot>, j: Vec<usize>, slot: Slot) -> Result<()> {
    match slots.remove(&j) {
        None => {
            slots.insert(j, slot);
        }
        Some(prev) => {
            let mut directions = prev.directions.clone();
            directions.extend(&slot.directions);
            let merged = Slot {
                form: prev.form.wedge(&slot.form)?,
                directions,
                support: prev.support.or(slot.support),
            };
            slots.insert(j, merged);
        }
    }
    Ok(())
}

/// Index of slot coordinate `ji` of a block with `k` cuts, sent through
/// `perm` (offset `offset` within the shuffled sources) into `total` cuts.
fn map_index(ji: usize, k: usize, perm: &[usize], offset: usize, total: usize) -> usize {
    if ji == 0 {
        0
    } else if ji == k + 1 {
        total + 1
    } else {
        perm[offset + ji - 1] + 1
    }
}

fn same_shape(a: &LabeledIntegrand, b: &LabeledIntegrand) -> Result<()> {
    if a.cube_dim != b.cube_dim {
        return Err(Error::DimensionMismatch(format!(
            "integrands on {}- and {}-cubes",
            a.cube_dim, b.cube_dim
        )));
    }
    Ok(())
}

/// The integrand of one shuffle term: `I'` slots moved by the first block of
/// each permutation, `I''` slots by the second. Slots landing on the same
/// boundary index are wedged.
pub fn shuffle_combine(
    first: &LabeledIntegrand,
    second: &LabeledIntegrand,
    rho: &ProductShuffle,
    barred: bool,
) -> Result<LabeledIntegrand> {
    same_shape(first, second)?;
    let n = first.cube_dim;
    if rho.len() != n {
        return Err(Error::ShuffleFamily(format!("{} permutations for {n} directions", rho.len())));
    }
    let mut perms: Vec<Permutation> = Vec::with_capacity(n);
    for (i, p) in rho.iter().enumerate() {
        let inner = if barred {
            unbar(p).ok_or_else(|| Error::ShuffleFamily(format!("direction {} does not fix its ends", i + 1)))?
        } else {
            p.clone()
        };
        if !is_block_shuffle(&inner, &[first.cuts[i], second.cuts[i]]) {
            return Err(Error::ShuffleFamily(format!(
                "direction {} is not a shuffle of ({}, {})",
                i + 1,
                first.cuts[i],
                second.cuts[i]
            )));
        }
        perms.push(inner);
    }
    let cuts: Vec<usize> = first.cuts.iter().zip(&second.cuts).map(|(a, b)| a + b).collect();
    let mut slots = BTreeMap::new();
    for (block, offsets) in [(first, vec![0; n]), (second, first.cuts.clone())] {
        for (j, slot) in &block.slots {
            let mapped = (0..n)
                .map(|i| map_index(j[i], block.cuts[i], &perms[i], offsets[i], cuts[i]))
                .collect();
            place(&mut slots, mapped, slot.clone())?;
        }
    }
    Ok(LabeledIntegrand {
        cube_dim: n,
        cuts,
        slots,
    })
}

/// Product of the two integrals against the sum over product shuffles.
pub fn membrane_shuffle_sides(
    g: &Membrane,
    first: &LabeledIntegrand,
    second: &LabeledIntegrand,
    barred: bool,
    cfg: &QuadratureConfig,
) -> Result<(f64, f64)> {
    same_shape(first, second)?;
    let lhs = integrate_membrane(g, first, cfg)?.value * integrate_membrane(g, second, cfg)?.value;
    let family = enumerate_product(&first.cuts, &second.cuts, barred)?;
    let terms: Vec<Result<f64>> = family
        .par_iter()
        .map(|rho| Ok(integrate_membrane(g, &shuffle_combine(first, second, rho, barred)?, cfg)?.value))
        .collect();
    let mut rhs = 0.0;
    for t in terms {
        rhs += t?;
    }
    Ok((lhs, rhs))
}

pub fn check_membrane_shuffle(
    g: &Membrane,
    first: &LabeledIntegrand,
    second: &LabeledIntegrand,
    barred: bool,
    cfg: &QuadratureConfig,
    tol: Tolerance,
) -> Result<Check> {
    let (lhs, rhs) = membrane_shuffle_sides(g, first, second, barred, cfg)?;
    let name = if barred { "membrane-shuffle-barred" } else { "membrane-shuffle" };
    Ok(Check::compare(name, lhs, rhs, tol))
}

/// Integrand on the glued membrane for one element of the first-direction
/// concatenation family. `I'` slots are restricted to `t_1 <= 1/2` and
/// `I''` slots to `t_1 > 1/2`.
pub fn glue_combine(first: &LabeledIntegrand, second: &LabeledIntegrand, rho: &ProductShuffle) -> Result<LabeledIntegrand> {
    same_shape(first, second)?;
    if first.cube_dim == 0 {
        return Err(Error::Invalid("gluing needs a positive-dimensional cube".into()));
    }
    let face = |block: &LabeledIntegrand, at: usize, name: &str| -> Result<()> {
        if let Some(j) = block.slots.keys().find(|j| j[0] == at) {
            return Err(Error::Invalid(format!(
                "{name} slot {j:?} sits on the glued face, which is not a cut of the glued membrane"
            )));
        }
        Ok(())
    };
    face(first, first.cuts[0] + 1, "first")?;
    face(second, 0, "second")?;
    let mut combined = shuffle_combine(first, second, rho, true)?;
    if rho[0] != crate::shuffles::bar(&(0..first.cuts[0] + second.cuts[0]).collect::<Vec<_>>()) {
        return Err(Error::ShuffleFamily("direction 1 must concatenate".into()));
    }
    let (k1, k) = (first.cuts[0], combined.cuts[0]);
    for (j, slot) in combined.slots.iter_mut() {
        slot.support = match j[0] {
            0 => None,
            x if x == k + 1 => None,
            x if x <= k1 => Some(Support::FIRST_HALF),
            _ => Some(Support::SECOND_HALF),
        };
    }
    Ok(combined)
}

/// Product of integrals over two membranes against the glued-membrane sum.
pub fn glued_product_sides(
    g1: &Membrane,
    g2: &Membrane,
    first: &LabeledIntegrand,
    second: &LabeledIntegrand,
    face_tol: f64,
    cfg: &QuadratureConfig,
) -> Result<(f64, f64)> {
    let g = glue_membranes(g1, g2, face_tol)?;
    let lhs = integrate_membrane(g1, first, cfg)?.value * integrate_membrane(g2, second, cfg)?.value;
    let family = enumerate_sh1(&first.cuts, &second.cuts)?;
    let terms: Vec<Result<f64>> = family
        .par_iter()
        .map(|rho| Ok(integrate_membrane(&g, &glue_combine(first, second, rho)?, cfg)?.value))
        .collect();
    let mut rhs = 0.0;
    for t in terms {
        rhs += t?;
    }
    Ok((lhs, rhs))
}

pub fn check_glued_product(
    g1: &Membrane,
    g2: &Membrane,
    first: &LabeledIntegrand,
    second: &LabeledIntegrand,
    face_tol: f64,
    cfg: &QuadratureConfig,
    tol: Tolerance,
) -> Result<Check> {
    let (lhs, rhs) = glued_product_sides(g1, g2, first, second, face_tol, cfg)?;
    Ok(Check::compare("glued-product", lhs, rhs, tol))
}

/// An integrand on the `(n-1)`-cube whose `designated` slot additionally
/// consumes the last direction `dt_n` of an `n`-membrane.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportIntegrand {
    pub integrand: LabeledIntegrand,
    pub designated: Vec<usize>,
}

impl TransportIntegrand {
    pub fn new(integrand: LabeledIntegrand, designated: Vec<usize>) -> Self {
        Self { integrand, designated }
    }

    fn validate(&self) -> Result<()> {
        let i = &self.integrand;
        i.validate_structure().map_err(Error::Integrand)?;
        if self.designated.len() != i.cube_dim
            || self.designated.iter().zip(&i.cuts).any(|(&j, &k)| j > k + 1)
        {
            return Err(Error::Integrand(Violation::SlotOutOfRange {
                slot: self.designated.clone(),
            }));
        }
        for (j, slot) in &i.slots {
            let extra = usize::from(*j == self.designated);
            if slot.form.degree() != slot.directions.len() + extra {
                return Err(Error::Integrand(Violation::Degree {
                    slot: j.clone(),
                    degree: slot.form.degree(),
                    expected: slot.directions.len() + extra,
                }));
            }
        }
        if !i.slots.contains_key(&self.designated) {
            // An absent designated slot is the unit 0-form, which cannot
            // absorb dt_n.
            return Err(Error::Integrand(Violation::Degree {
                slot: self.designated.clone(),
                degree: 0,
                expected: 1,
            }));
        }
        Ok(())
    }

    /// The slot list with `dt_n` appended at the designated slot.
    fn lifted_slots(&self, n: usize) -> impl Iterator<Item = (&Vec<usize>, Slot)> + '_ {
        self.integrand.slots.iter().map(move |(j, slot)| {
            let mut s = slot.clone();
            if *j == self.designated {
                s.directions.push(n - 1);
            }
            (j, s)
        })
    }
}

/// `s -> a(s)`: the `(n-1)`-dimensional integral of the slice of `g` at
/// `t_n = s`, with the designated slot read through its `dt_n` component.
pub fn extract_component<'a>(
    g: &'a Membrane,
    w: &'a TransportIntegrand,
    cfg: &'a QuadratureConfig,
) -> Result<impl Fn(f64) -> Result<f64> + 'a> {
    let n = g.cube_dim();
    if w.integrand.cube_dim + 1 != n {
        return Err(Error::DimensionMismatch(format!(
            "transport integrand on a {}-cube for a {n}-membrane",
            w.integrand.cube_dim
        )));
    }
    w.validate()?;
    check_cube_dim(g)?;
    let cuts = w.integrand.cuts.clone();
    let layout = OrderedLayout::new(&cuts);
    let mut prepared = Vec::new();
    for (j, slot) in w.lifted_slots(n) {
        if slot.is_trivial() {
            continue;
        }
        let (sign, dirs) = listed_sign(&slot.directions)?;
        let component = Arc::new(g.pullback(&slot.form)?.compile(&dirs)?);
        prepared.push((component, sign, j.clone()));
    }
    Ok(move |s: f64| {
        let plans = prepared
            .iter()
            .map(|(component, sign, j)| {
                let mut coords = coords_for(&layout, &cuts, j);
                coords.push(Coord::Fixed(s));
                SlotPlan {
                    component: component.clone(),
                    sign: *sign,
                    coords,
                    support: None,
                }
            })
            .collect();
        if cuts.is_empty() {
            let p: Vec<SlotPlan> = plans;
            return p.iter().try_fold(1.0, |acc, plan| Ok(acc * plan.eval(&[])?));
        }
        Ok(integrate_plans(g, &cuts, plans, &[], cfg)?.value)
    })
}

/// The `n`-dimensional integrand of one term of the transport sum: the
/// blocks `W, T, ..., T` shuffled by `rho` in directions `< n`, and placed
/// at cut `b + 1` of direction `n` for block `b`.
pub fn transport_combine(
    w: &TransportIntegrand,
    t: &TransportIntegrand,
    copies: usize,
    rho: &ProductShuffle,
) -> Result<LabeledIntegrand> {
    same_shape(&w.integrand, &t.integrand)?;
    let m = w.integrand.cube_dim;
    let n = m + 1;
    if rho.len() != n {
        return Err(Error::ShuffleFamily(format!("{} permutations for {n} directions", rho.len())));
    }
    for i in 0..m {
        let blocks = shn_blocks(w.integrand.cuts[i], t.integrand.cuts[i], copies);
        if !is_block_shuffle(&rho[i], &blocks) {
            return Err(Error::ShuffleFamily(format!("direction {} is not a block shuffle", i + 1)));
        }
    }
    if rho[m] != (0..=copies).collect::<Vec<_>>() {
        return Err(Error::ShuffleFamily(format!("direction {n} must be the identity")));
    }
    let mut cuts: Vec<usize> = (0..m)
        .map(|i| w.integrand.cuts[i] + copies * t.integrand.cuts[i])
        .collect();
    cuts.push(copies + 1);
    let mut slots = BTreeMap::new();
    for b in 0..=copies {
        let block = if b == 0 { w } else { t };
        let offsets: Vec<usize> = (0..m)
            .map(|i| if b == 0 { 0 } else { w.integrand.cuts[i] + (b - 1) * t.integrand.cuts[i] })
            .collect();
        for (j, slot) in block.lifted_slots(n) {
            let mut mapped: Vec<usize> = (0..m)
                .map(|i| map_index(j[i], block.integrand.cuts[i], &rho[i], offsets[i], cuts[i]))
                .collect();
            mapped.push(b + 1);
            place(&mut slots, mapped, slot)?;
        }
    }
    Ok(LabeledIntegrand {
        cube_dim: n,
        cuts,
        slots,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportValue {
    /// Iterated path integral of the extracted coefficients.
    pub lhs: f64,
    /// Sum of membrane integrals over the transport shuffles.
    pub rhs: f64,
    pub terms: usize,
}

/// `int a_W(s_1) a_T(s_2) ... a_T(s_{l+1})` computed twice: from extracted
/// coefficients along the transport direction, and as a shuffle sum of
/// membrane integrals.
pub fn higher_transport(
    g: &Membrane,
    w: &TransportIntegrand,
    t: &TransportIntegrand,
    copies: usize,
    cfg: &QuadratureConfig,
) -> Result<TransportValue> {
    let a_w = extract_component(g, w, cfg)?;
    let a_t = extract_component(g, t, cfg)?;
    let funcs: [&dyn Fn(f64) -> Result<f64>; 2] = [&a_w, &a_t];
    let mut word = vec![0];
    word.extend(std::iter::repeat_n(1, copies));
    let lhs = iterated_line_integral(&funcs, &word, &[], cfg)?.value;

    let pad = |c: &[usize]| [c, &[0]].concat();
    let family = enumerate_shn(&pad(&w.integrand.cuts), &pad(&t.integrand.cuts), copies)?;
    let terms: Vec<Result<f64>> = family
        .par_iter()
        .map(|rho| Ok(integrate_membrane(g, &transport_combine(w, t, copies, rho)?, cfg)?.value))
        .collect();
    let mut rhs = 0.0;
    for term in terms {
        rhs += term?;
    }
    Ok(TransportValue {
        lhs,
        rhs,
        terms: family.len(),
    })
}

pub fn check_higher_transport(
    g: &Membrane,
    w: &TransportIntegrand,
    t: &TransportIntegrand,
    copies: usize,
    cfg: &QuadratureConfig,
    tol: Tolerance,
) -> Result<Check> {
    let v = higher_transport(g, w, t, copies, cfg)?;
    Ok(Check::compare(format!("higher-transport[l={copies}]"), v.lhs, v.rhs, tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::coordinate_names;

    fn form(dim: usize, degree: usize, terms: &[(&[usize], &str)]) -> DifferentialForm {
        let names = coordinate_names("x", dim);
        DifferentialForm::from_terms(
            dim,
            degree,
            terms
                .iter()
                .map(|(i, s)| (i.to_vec(), crate::expr::parse(s, &names).unwrap())),
        )
        .unwrap()
    }

    fn area(coeff: &str) -> DifferentialForm {
        form(2, 2, &[(&[0, 1], coeff)])
    }

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::gauss()
    }

    #[test]
    fn validation_examples() {
        let ok = LabeledIntegrand::new(vec![1, 1]).with_slot(vec![1, 1], area("1"), vec![0, 1]);
        assert_eq!(ok.validate(), Ok(()));
        let partial = LabeledIntegrand::new(vec![1, 1]).with_slot(vec![1, 1], form(2, 1, &[(&[0], "1")]), vec![0]);
        assert_eq!(partial.validate(), Err(Violation::Unconsumed { direction: 2, index: 1 }));
        let twice = LabeledIntegrand::new(vec![1, 0])
            .with_slot(vec![1, 0], form(2, 1, &[(&[0], "1")]), vec![0])
            .with_slot(vec![1, 1], form(2, 1, &[(&[0], "1")]), vec![0]);
        assert_eq!(twice.validate(), Err(Violation::Duplicate { direction: 1, index: 1 }));
        let boundary = LabeledIntegrand::new(vec![0]).with_slot(vec![0], form(1, 1, &[(&[0], "1")]), vec![0]);
        assert!(matches!(boundary.validate(), Err(Violation::BoundaryDirection { .. })));
        let degree = LabeledIntegrand::new(vec![1]).with_slot(vec![1], area("1"), vec![0]);
        assert!(degree.validate().is_err());
    }

    #[test]
    fn integral_examples() {
        let g = Membrane::identity(2);
        let one = LabeledIntegrand::new(vec![1, 1]).with_slot(vec![1, 1], area("1"), vec![0, 1]);
        assert!((integrate_membrane(&g, &one, &cfg()).unwrap().value - 1.0).abs() < 1e-14);
        let x1 = LabeledIntegrand::new(vec![1, 1]).with_slot(vec![1, 1], area("x1"), vec![0, 1]);
        assert!((integrate_membrane(&g, &x1, &cfg()).unwrap().value - 0.5).abs() < 1e-14);
        let two = LabeledIntegrand::new(vec![2, 1])
            .with_slot(vec![1, 1], area("1"), vec![0, 1])
            .with_slot(vec![2, 1], form(2, 1, &[(&[0], "1")]), vec![0]);
        assert!((integrate_membrane(&g, &two, &cfg()).unwrap().value - 0.5).abs() < 1e-14);
    }

    #[test]
    fn listed_order_sets_the_sign() {
        let g = Membrane::parse(2, &["t1 + t2^2", "t1*t2"]).unwrap();
        let a = LabeledIntegrand::new(vec![1, 1]).with_slot(vec![1, 1], area("1 + x1"), vec![0, 1]);
        let b = LabeledIntegrand::new(vec![1, 1]).with_slot(vec![1, 1], area("1 + x1"), vec![1, 0]);
        let (va, vb) = (
            integrate_membrane(&g, &a, &cfg()).unwrap().value,
            integrate_membrane(&g, &b, &cfg()).unwrap().value,
        );
        assert!(va != 0.0 && va == -vb);
    }

    #[test]
    fn empty_cuts_multiply_boundary_values() {
        let g = Membrane::parse(2, &["1 + t1", "2 + t2"]).unwrap();
        let names = coordinate_names("x", 2);
        let f = DifferentialForm::scalar(2, crate::expr::parse("x1*x2", &names).unwrap());
        let i = LabeledIntegrand::new(vec![0, 0])
            .with_slot(vec![0, 0], f.clone(), vec![])
            .with_slot(vec![1, 1], f, vec![]);
        let v = integrate_membrane(&g, &i, &cfg()).unwrap().value;
        assert!((v - 2.0 * 6.0).abs() < 1e-14);
    }

    #[test]
    fn combine_examples() {
        let empty = LabeledIntegrand::new(vec![0, 0]);
        let rho = vec![vec![0, 1], vec![0, 1]];
        let c = shuffle_combine(&empty, &empty, &rho, true).unwrap();
        assert!(c.slots.is_empty() && c.cuts == vec![0, 0]);

        let a = LabeledIntegrand::new(vec![1, 1]).with_slot(vec![1, 1], area("1"), vec![0, 1]);
        let b = LabeledIntegrand::new(vec![1, 1]).with_slot(vec![1, 1], area("x1*x2"), vec![0, 1]);
        let id = vec![vec![0, 1], vec![0, 1]];
        let c = shuffle_combine(&a, &b, &id, false).unwrap();
        assert_eq!(c.slots.keys().cloned().collect::<Vec<_>>(), vec![vec![1, 1], vec![2, 2]]);
        assert_eq!(c.slots[&vec![1, 1]].form, area("1"));
        assert!(shuffle_combine(&a, &b, &vec![vec![1, 1], vec![0, 1]], false).is_err());

        let corner = |f| LabeledIntegrand::new(vec![0, 0]).with_slot(vec![0, 0], f, vec![]);
        let dx1 = form(2, 1, &[(&[0], "1")]);
        let c = shuffle_combine(&corner(dx1.clone()), &corner(dx1), &vec![vec![0, 1], vec![0, 1]], true).unwrap();
        assert!(c.slots[&vec![0, 0]].form.is_zero());
    }

    #[test]
    fn shuffle_relation_on_the_square() {
        let g = Membrane::identity(2);
        let a = LabeledIntegrand::new(vec![1, 1]).with_slot(vec![1, 1], area("1"), vec![0, 1]);
        let b = LabeledIntegrand::new(vec![1, 1]).with_slot(vec![1, 1], area("x1*x2"), vec![0, 1]);
        let (lhs, rhs) = membrane_shuffle_sides(&g, &a, &b, false, &cfg()).unwrap();
        assert!((lhs - 0.25).abs() < 1e-14);
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} {rhs}");
        let unit = LabeledIntegrand::new(vec![0, 0]);
        let (lhs, rhs) = membrane_shuffle_sides(&g, &a, &unit, true, &cfg()).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn glued_halves() {
        let left = Membrane::parse(2, &["t1/2", "t2"]).unwrap();
        let right = Membrane::parse(2, &["(1+t1)/2", "t2"]).unwrap();
        let a = LabeledIntegrand::new(vec![1, 1]).with_slot(vec![1, 1], area("1"), vec![0, 1]);
        let (lhs, rhs) = glued_product_sides(&left, &right, &a, &a, 1e-9, &cfg()).unwrap();
        assert!((lhs - 0.25).abs() < 1e-14 && (lhs - rhs).abs() < 1e-12, "{lhs} {rhs}");
        let face = LabeledIntegrand::new(vec![0, 0]).with_slot(vec![1, 0], DifferentialForm::unit(2), vec![]);
        assert!(glued_product_sides(&left, &right, &face, &a, 1e-9, &cfg()).is_err());
    }

    #[test]
    fn extracted_components() {
        let cfg = cfg();
        let g = Membrane::identity(2);
        let w = TransportIntegrand::new(
            LabeledIntegrand::new(vec![1]).with_slot(vec![1], area("1"), vec![0]),
            vec![1],
        );
        let a = extract_component(&g, &w, &cfg).unwrap();
        assert!((a(0.3).unwrap() - 1.0).abs() < 1e-14);
        let w = TransportIntegrand::new(
            LabeledIntegrand::new(vec![1]).with_slot(vec![1], area("x2"), vec![0]),
            vec![1],
        );
        let a = extract_component(&g, &w, &cfg).unwrap();
        assert!((a(0.3).unwrap() - 0.3).abs() < 1e-14);
        let path = Membrane::parse(1, &["t", "t^2"]).unwrap();
        let w = TransportIntegrand::new(
            LabeledIntegrand::new(vec![]).with_slot(vec![], form(2, 1, &[(&[1], "1")]), vec![]),
            vec![],
        );
        let a = extract_component(&path, &w, &cfg).unwrap();
        assert!((a(0.25).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn transport_on_the_square() {
        let g = Membrane::parse(2, &["t1 + t2/3", "t2*(1 + t1)"]).unwrap();
        let w = TransportIntegrand::new(
            LabeledIntegrand::new(vec![1]).with_slot(vec![1], area("1 + x1"), vec![0]),
            vec![1],
        );
        let t = TransportIntegrand::new(
            LabeledIntegrand::new(vec![1]).with_slot(vec![1], area("x2"), vec![0]),
            vec![1],
        );
        for copies in [1, 2] {
            let v = higher_transport(&g, &w, &t, copies, &cfg()).unwrap();
            assert!((v.lhs - v.rhs).abs() <= 1e-9 * (1.0 + v.lhs.abs()), "{v:?}");
        }
    }
}
