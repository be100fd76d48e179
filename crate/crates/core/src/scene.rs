//! Scene documents: named forms, membranes, integrands and connections in
//! one JSON file, together with the checks to run on them.
//!
//! Names are resolved in document order, so a membrane may refer to
//! membranes listed before it. Form multi-indices and slot directions `J`
//! are 1-based; slot positions `j` run over `0..=k_i + 1`.

use std::collections::BTreeMap;
use std::path::{Path as FsPath, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::chen::{check_composition, check_decorated_shuffle, check_shuffle, holonomy_curvature_check, iterated_path_integral, Decorated, MatrixConnection, ROUNDOFF};
use crate::error::Error;
use crate::expr::{coordinate_names, parse};
use crate::forms::DifferentialForm;
use crate::geometry::{concat_paths, glue_membranes, Membrane, MembraneFamily, SampleGrid, DEFAULT_ENDPOINT_TOL, DEFAULT_FACE_TOL};
use crate::membranes::{check_glued_product, check_higher_transport, check_membrane_shuffle, LabeledIntegrand, TransportIntegrand};
use crate::quadrature::QuadratureConfig;
use crate::report::{Check, Report, Tolerance};

/// Suite names accepted by [`Scene::verify`], besides `all`.
pub const SUITES: [&str; 8] = [
    "closed-form",
    "path-shuffle",
    "composition",
    "decorated-shuffle",
    "membrane-shuffle",
    "glued-product",
    "higher-transport",
    "holonomy",
];

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] serde_json::Error),
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
}

fn invalid(location: impl Into<String>, message: impl std::fmt::Display) -> SceneError {
    SceneError::Invalid {
        location: location.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDocument {
    /// Ambient chart dimension.
    pub dimension: usize,
    /// Used for path computations.
    #[serde(default)]
    pub quadrature: Option<QuadratureConfig>,
    /// Used for membrane computations; defaults to [`QuadratureConfig::gauss`].
    #[serde(default)]
    pub membrane_quadrature: Option<QuadratureConfig>,
    #[serde(default)]
    pub forms: Vec<FormSpec>,
    #[serde(default)]
    pub families: Vec<FamilySpec>,
    #[serde(default)]
    pub membranes: Vec<MembraneSpec>,
    #[serde(default)]
    pub integrands: Vec<IntegrandSpec>,
    #[serde(default)]
    pub connections: Vec<ConnectionSpec>,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormSpec {
    pub name: String,
    #[serde(default)]
    pub dim: Option<usize>,
    pub degree: usize,
    /// `"1,2" -> "x1*x2"`; the empty key is the 0-form coefficient.
    #[serde(default)]
    pub coeffs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub name: String,
    pub cube_dim: usize,
    /// Expressions in `t1..tn` and the family parameter `u`.
    pub components: Vec<String>,
}

/// Exactly one source must be given: `components`, `grid`/`values`,
/// `line`, `concat`, `glue`, `family`, `reverse` or `reparametrize`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MembraneSpec {
    pub name: String,
    #[serde(default)]
    pub cube_dim: Option<usize>,
    #[serde(default)]
    pub ambient_dim: Option<usize>,
    #[serde(default)]
    pub components: Option<Vec<String>>,
    /// File holding a flat JSON array of node values, relative to the document.
    #[serde(default)]
    pub grid: Option<String>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    /// `[cube_dim, ambient_dim, cells]` for sampled membranes.
    #[serde(default)]
    pub shape: Option<[usize; 3]>,
    #[serde(default)]
    pub line: Option<[Vec<f64>; 2]>,
    #[serde(default)]
    pub concat: Option<Vec<String>>,
    #[serde(default)]
    pub glue: Option<[String; 2]>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default)]
    pub u: Option<f64>,
    #[serde(default)]
    pub reverse: Option<String>,
    #[serde(default)]
    pub reparametrize: Option<String>,
    /// Reparametrization `[0,1] -> [0,1]` in `t`.
    #[serde(default)]
    pub phi: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotSpec {
    pub j: Vec<usize>,
    pub form: String,
    #[serde(rename = "J", default)]
    pub directions: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrandSpec {
    pub name: String,
    pub cube_dim: usize,
    pub cuts: Vec<usize>,
    #[serde(default)]
    pub slots: Vec<SlotSpec>,
    /// Slot that also consumes the transport direction.
    #[serde(default)]
    pub designated: Option<Vec<usize>>,
}

/// Either `entries` (row-major 1-form names) or a constant `matrix`
/// times one 1-form `form`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionSpec {
    pub name: String,
    #[serde(default)]
    pub size: Option<usize>,
    #[serde(default)]
    pub entries: Option<Vec<String>>,
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub form: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoratedSpec {
    /// Defaults to the unit 0-form.
    #[serde(default)]
    pub start: Option<String>,
    pub forms: Vec<String>,
    #[serde(default)]
    pub end: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub kind: String,
    #[serde(default)]
    pub tolerance: Option<Tolerance>,
    #[serde(default)]
    pub quadrature: Option<QuadratureConfig>,
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub membrane: Option<String>,
    #[serde(default)]
    pub membranes: Option<[String; 2]>,
    #[serde(default)]
    pub paths: Option<[String; 2]>,
    #[serde(default)]
    pub forms: Option<Vec<String>>,
    #[serde(default)]
    pub expected: Option<f64>,
    #[serde(default)]
    pub first: Option<serde_json::Value>,
    #[serde(default)]
    pub second: Option<serde_json::Value>,
    #[serde(default)]
    pub level: Option<usize>,
    #[serde(default)]
    pub barred: bool,
    #[serde(default)]
    pub face_tol: Option<f64>,
    #[serde(default)]
    pub w: Option<String>,
    #[serde(default)]
    pub t: Option<String>,
    #[serde(default)]
    pub copies: Option<usize>,
    #[serde(default)]
    pub connection: Option<String>,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
    #[serde(default)]
    pub min_order: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct NamedIntegrand {
    pub integrand: LabeledIntegrand,
    pub designated: Option<Vec<usize>>,
}

/// A resolved document.
#[derive(Debug, Clone)]
pub struct Scene {
    pub dimension: usize,
    pub path_cfg: QuadratureConfig,
    pub membrane_cfg: QuadratureConfig,
    pub forms: BTreeMap<String, DifferentialForm>,
    pub families: BTreeMap<String, MembraneFamily>,
    pub membranes: BTreeMap<String, Membrane>,
    pub integrands: BTreeMap<String, NamedIntegrand>,
    pub connections: BTreeMap<String, MatrixConnection>,
    checks: Vec<PlannedCheck>,
}

#[derive(Debug, Clone)]
struct PlannedCheck {
    label: String,
    kind: String,
    tol: Tolerance,
    cfg: QuadratureConfig,
    body: CheckBody,
}

#[derive(Debug, Clone)]
enum CheckBody {
    ClosedForm {
        path: String,
        forms: Vec<String>,
        expected: f64,
    },
    PathShuffle {
        path: String,
        first: Vec<String>,
        second: Vec<String>,
    },
    Composition {
        paths: [String; 2],
        forms: Vec<String>,
        level: usize,
    },
    Decorated {
        path: String,
        first: DecoratedSpec,
        second: DecoratedSpec,
    },
    MembraneShuffle {
        membrane: String,
        first: String,
        second: String,
        barred: bool,
    },
    Glued {
        membranes: [String; 2],
        first: String,
        second: String,
        face_tol: f64,
    },
    Transport {
        membrane: String,
        w: String,
        t: String,
        copies: usize,
    },
    Holonomy {
        connection: String,
        center: Vec<f64>,
        eps: Vec<f64>,
        level: usize,
        min_order: f64,
    },
}

fn parse_index(key: &str, dim: usize) -> Result<Vec<usize>, String> {
    if key.trim().is_empty() {
        return Ok(Vec::new());
    }
    key.split(',')
        .map(|p| {
            let i: usize = p.trim().parse().map_err(|_| format!("bad multi-index '{key}'"))?;
            if i == 0 || i > dim {
                return Err(format!("index {i} in '{key}' is outside 1..={dim}"));
            }
            Ok(i - 1)
        })
        .collect()
}

impl FormSpec {
    pub fn build(&self, default_dim: usize) -> Result<DifferentialForm, String> {
        let dim = self.dim.unwrap_or(default_dim);
        let names = coordinate_names("x", dim);
        let mut terms = Vec::with_capacity(self.coeffs.len());
        for (key, src) in &self.coeffs {
            let index = parse_index(key, dim)?;
            let expr = parse(src, &names).map_err(|e| format!("coefficient '{key}': {e}"))?;
            terms.push((index, expr));
        }
        DifferentialForm::from_terms(dim, self.degree, terms).map_err(|e| e.to_string())
    }
}

fn single<'a, T>(m: &'a BTreeMap<String, T>, what: &str, name: &str) -> Result<&'a T, String> {
    m.get(name).ok_or_else(|| format!("unknown {what} '{name}'"))
}

fn take<T: Clone>(v: &Option<T>, field: &str) -> Result<T, String> {
    v.clone().ok_or_else(|| format!("missing field '{field}'"))
}

fn strings(v: &Option<serde_json::Value>, field: &str) -> Result<Vec<String>, String> {
    let v = v.as_ref().ok_or_else(|| format!("missing field '{field}'"))?;
    serde_json::from_value(v.clone()).map_err(|e| format!("field '{field}': {e}"))
}

fn string(v: &Option<serde_json::Value>, field: &str) -> Result<String, String> {
    let v = v.as_ref().ok_or_else(|| format!("missing field '{field}'"))?;
    serde_json::from_value(v.clone()).map_err(|e| format!("field '{field}': {e}"))
}

fn decorated(v: &Option<serde_json::Value>, field: &str) -> Result<DecoratedSpec, String> {
    let v = v.as_ref().ok_or_else(|| format!("missing field '{field}'"))?;
    serde_json::from_value(v.clone()).map_err(|e| format!("field '{field}': {e}"))
}

impl Scene {
    pub fn load(path: &FsPath) -> Result<Self, SceneError> {
        let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_str(&text, path.parent().unwrap_or(FsPath::new(".")))
    }

    /// Parses a document; grid files are looked up relative to `base`.
    pub fn from_str(text: &str, base: &FsPath) -> Result<Self, SceneError> {
        let doc: SceneDocument = serde_json::from_str(text)?;
        Self::resolve(doc, base)
    }

    pub fn resolve(doc: SceneDocument, base: &FsPath) -> Result<Self, SceneError> {
        let d = doc.dimension;
        if d == 0 {
            return Err(invalid("dimension", "must be positive"));
        }
        let path_cfg = doc.quadrature.clone().unwrap_or_default();
        path_cfg.validate().map_err(|e| invalid("quadrature", e))?;
        let membrane_cfg = doc.membrane_quadrature.clone().unwrap_or_else(QuadratureConfig::gauss);
        membrane_cfg.validate().map_err(|e| invalid("membrane_quadrature", e))?;

        let mut forms = BTreeMap::new();
        for (i, f) in doc.forms.iter().enumerate() {
            let loc = format!("forms[{i}] '{}'", f.name);
            if f.dim.is_some_and(|x| x != d) {
                return Err(invalid(loc, format!("dim differs from the document dimension {d}")));
            }
            let form = f.build(d).map_err(|e| invalid(&loc, e))?;
            if forms.insert(f.name.clone(), form).is_some() {
                return Err(invalid(loc, "duplicate name"));
            }
        }

        let mut families = BTreeMap::new();
        for (i, f) in doc.families.iter().enumerate() {
            let loc = format!("families[{i}] '{}'", f.name);
            if f.components.len() != d {
                return Err(invalid(loc, format!("needs {d} components")));
            }
            let comps: Vec<&str> = f.components.iter().map(String::as_str).collect();
            let fam = MembraneFamily::parse(f.cube_dim, &comps).map_err(|e| invalid(&loc, e))?;
            families.insert(f.name.clone(), fam);
        }

        let mut membranes: BTreeMap<String, Membrane> = BTreeMap::new();
        for (i, m) in doc.membranes.iter().enumerate() {
            let loc = format!("membranes[{i}] '{}'", m.name);
            let g = build_membrane(m, &membranes, &families, base).map_err(|e| invalid(&loc, e))?;
            if g.ambient_dim() != d {
                return Err(invalid(loc, format!("maps into R^{} but the document dimension is {d}", g.ambient_dim())));
            }
            if m.cube_dim.is_some_and(|n| n != g.cube_dim()) {
                return Err(invalid(loc, "cube_dim does not match the map"));
            }
            if membranes.insert(m.name.clone(), g).is_some() {
                return Err(invalid(loc, "duplicate name"));
            }
        }

        let mut integrands = BTreeMap::new();
        for (i, s) in doc.integrands.iter().enumerate() {
            let loc = format!("integrands[{i}] '{}'", s.name);
            let entry = build_integrand(s, &forms).map_err(|e| invalid(&loc, e))?;
            integrands.insert(s.name.clone(), entry);
        }

        let mut connections = BTreeMap::new();
        for (i, c) in doc.connections.iter().enumerate() {
            let loc = format!("connections[{i}] '{}'", c.name);
            let conn = build_connection(c, &forms).map_err(|e| invalid(&loc, e))?;
            connections.insert(c.name.clone(), conn);
        }

        let mut scene = Scene {
            dimension: d,
            path_cfg,
            membrane_cfg,
            forms,
            families,
            membranes,
            integrands,
            connections,
            checks: Vec::new(),
        };
        for (i, c) in doc.checks.iter().enumerate() {
            let loc = format!("checks[{i}]");
            let planned = scene.plan(c, i).map_err(|e| invalid(&loc, e))?;
            scene.checks.push(planned);
        }
        Ok(scene)
    }

    pub fn form(&self, name: &str) -> Result<&DifferentialForm, String> {
        single(&self.forms, "form", name)
    }

    pub fn membrane(&self, name: &str) -> Result<&Membrane, String> {
        single(&self.membranes, "membrane", name)
    }

    pub fn integrand(&self, name: &str) -> Result<&NamedIntegrand, String> {
        single(&self.integrands, "integrand", name)
    }

    pub fn connection(&self, name: &str) -> Result<&MatrixConnection, String> {
        single(&self.connections, "connection", name)
    }

    pub fn form_list(&self, names: &[String]) -> Result<Vec<DifferentialForm>, String> {
        names.iter().map(|n| self.form(n).cloned()).collect()
    }

    fn path(&self, name: &str) -> Result<&Membrane, String> {
        let g = self.membrane(name)?;
        if g.cube_dim() != 1 {
            return Err(format!("'{name}' is a {}-membrane, not a path", g.cube_dim()));
        }
        Ok(g)
    }

    fn transport_integrand(&self, name: &str) -> Result<TransportIntegrand, String> {
        let i = self.integrand(name)?;
        let designated = i
            .designated
            .clone()
            .ok_or_else(|| format!("integrand '{name}' has no designated slot"))?;
        Ok(TransportIntegrand::new(i.integrand.clone(), designated))
    }

    fn plan(&self, c: &CheckSpec, index: usize) -> Result<PlannedCheck, String> {
        let kind = c.kind.as_str();
        let (tol, membrane_kind) = match kind {
            "closed-form" => (Tolerance::absolute(1e-8), false),
            "path-shuffle" => (Tolerance::mixed(1e-6), false),
            "composition" | "decorated-shuffle" => (Tolerance::absolute(1e-6), false),
            "membrane-shuffle" | "glued-product" => (Tolerance::mixed(1e-5), true),
            "higher-transport" => (Tolerance::mixed(1e-4), true),
            "holonomy" => (Tolerance::absolute(1e-4), false),
            other => return Err(format!("unknown check kind '{other}'")),
        };
        let body = match kind {
            "closed-form" => {
                let path = take(&c.path, "path")?;
                let forms = take(&c.forms, "forms")?;
                self.path(&path)?;
                self.form_list(&forms)?;
                CheckBody::ClosedForm {
                    path,
                    forms,
                    expected: take(&c.expected, "expected")?,
                }
            }
            "path-shuffle" => {
                let path = take(&c.path, "path")?;
                let (first, second) = (strings(&c.first, "first")?, strings(&c.second, "second")?);
                self.path(&path)?;
                self.form_list(&first)?;
                self.form_list(&second)?;
                CheckBody::PathShuffle { path, first, second }
            }
            "composition" => {
                let paths = take(&c.paths, "paths")?;
                self.path(&paths[0])?;
                self.path(&paths[1])?;
                let forms = take(&c.forms, "forms")?;
                self.form_list(&forms)?;
                CheckBody::Composition {
                    paths,
                    forms,
                    level: take(&c.level, "level")?,
                }
            }
            "decorated-shuffle" => {
                let path = take(&c.path, "path")?;
                self.path(&path)?;
                let (first, second) = (decorated(&c.first, "first")?, decorated(&c.second, "second")?);
                for d in [&first, &second] {
                    self.decorated(d)?;
                }
                CheckBody::Decorated { path, first, second }
            }
            "membrane-shuffle" => {
                let membrane = take(&c.membrane, "membrane")?;
                self.membrane(&membrane)?;
                let (first, second) = (string(&c.first, "first")?, string(&c.second, "second")?);
                self.integrand(&first)?;
                self.integrand(&second)?;
                CheckBody::MembraneShuffle {
                    membrane,
                    first,
                    second,
                    barred: c.barred,
                }
            }
            "glued-product" => {
                let membranes = take(&c.membranes, "membranes")?;
                self.membrane(&membranes[0])?;
                self.membrane(&membranes[1])?;
                let (first, second) = (string(&c.first, "first")?, string(&c.second, "second")?);
                self.integrand(&first)?;
                self.integrand(&second)?;
                CheckBody::Glued {
                    membranes,
                    first,
                    second,
                    face_tol: c.face_tol.unwrap_or(DEFAULT_FACE_TOL),
                }
            }
            "higher-transport" => {
                let membrane = take(&c.membrane, "membrane")?;
                self.membrane(&membrane)?;
                let (w, t) = (take(&c.w, "w")?, take(&c.t, "t")?);
                self.transport_integrand(&w)?;
                self.transport_integrand(&t)?;
                CheckBody::Transport {
                    membrane,
                    w,
                    t,
                    copies: take(&c.copies, "copies")?,
                }
            }
            "holonomy" => {
                let connection = take(&c.connection, "connection")?;
                self.connection(&connection)?;
                let center = take(&c.center, "center")?;
                if center.len() != self.dimension {
                    return Err(format!("center needs {} coordinates", self.dimension));
                }
                let eps = take(&c.eps, "eps")?;
                if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
                    return Err("eps must be a non-empty list of positive sizes".into());
                }
                CheckBody::Holonomy {
                    connection,
                    center,
                    eps,
                    level: c.level.unwrap_or(4),
                    min_order: c.min_order.unwrap_or(3.0),
                }
            }
            _ => unreachable!(),
        };
        let cfg = match &c.quadrature {
            Some(q) => q.clone(),
            None if membrane_kind => self.membrane_cfg.clone(),
            None => self.path_cfg.clone(),
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(PlannedCheck {
            label: c.name.clone().unwrap_or_else(|| format!("{kind}#{index}")),
            kind: kind.to_string(),
            tol: c.tolerance.unwrap_or(tol),
            cfg,
            body,
        })
    }

    fn decorated(&self, d: &DecoratedSpec) -> Result<Decorated, String> {
        let unit = DifferentialForm::unit(self.dimension);
        let end = |n: &Option<String>| -> Result<DifferentialForm, String> {
            match n {
                Some(n) => self.form(n).cloned(),
                None => Ok(unit.clone()),
            }
        };
        Ok(Decorated {
            start: end(&d.start)?,
            forms: self.form_list(&d.forms)?,
            end: end(&d.end)?,
        })
    }

    /// Number of checks in the document.
    pub fn check_count(&self) -> usize {
        self.checks.len()
    }

    /// Runs the checks of one suite, or all of them, in document order.
    pub fn verify(&self, suite: &str) -> Result<Report, String> {
        if suite != "all" && !SUITES.contains(&suite) {
            return Err(format!("unknown suite '{suite}'"));
        }
        let selected: Vec<&PlannedCheck> = self
            .checks
            .iter()
            .filter(|c| suite == "all" || c.kind == suite)
            .collect();
        let results: Vec<Vec<Check>> = selected.par_iter().map(|c| self.run(c)).collect();
        Ok(Report::new(results.into_iter().flatten().collect()))
    }

    fn run(&self, c: &PlannedCheck) -> Vec<Check> {
        match self.evaluate(c) {
            Ok(checks) => checks
                .into_iter()
                .map(|mut check| {
                    check.name = relabel(&check.name, &c.label);
                    check
                })
                .collect(),
            Err(e) => vec![Check::failed(c.label.clone(), &e, c.tol)],
        }
    }

    fn evaluate(&self, c: &PlannedCheck) -> crate::Result<Vec<Check>> {
        let (cfg, tol) = (&c.cfg, c.tol);
        match &c.body {
            CheckBody::ClosedForm { path, forms, expected } => {
                let g = lookup(self.path(path))?;
                let v = iterated_path_integral(g, &lookup(self.form_list(forms))?, cfg)?;
                Ok(vec![Check::compare(c.kind.clone(), v.value, *expected, tol)])
            }
            CheckBody::PathShuffle { path, first, second } => {
                let g = lookup(self.path(path))?;
                let (a, b) = (lookup(self.form_list(first))?, lookup(self.form_list(second))?);
                Ok(vec![check_shuffle(g, &a, &b, cfg, tol)?])
            }
            CheckBody::Composition { paths, forms, level } => {
                let (a, b) = (lookup(self.path(&paths[0]))?, lookup(self.path(&paths[1]))?);
                check_composition(a, b, &lookup(self.form_list(forms))?, *level, cfg, tol)
            }
            CheckBody::Decorated { path, first, second } => {
                let g = lookup(self.path(path))?;
                let (a, b) = (lookup(self.decorated(first))?, lookup(self.decorated(second))?);
                check_decorated_shuffle(g, &a, &b, cfg, tol)
            }
            CheckBody::MembraneShuffle {
                membrane,
                first,
                second,
                barred,
            } => {
                let g = lookup(self.membrane(membrane))?;
                let a = &lookup(self.integrand(first))?.integrand;
                let b = &lookup(self.integrand(second))?.integrand;
                Ok(vec![check_membrane_shuffle(g, a, b, *barred, cfg, tol)?])
            }
            CheckBody::Glued {
                membranes,
                first,
                second,
                face_tol,
            } => {
                let g1 = lookup(self.membrane(&membranes[0]))?;
                let g2 = lookup(self.membrane(&membranes[1]))?;
                let a = &lookup(self.integrand(first))?.integrand;
                let b = &lookup(self.integrand(second))?.integrand;
                Ok(vec![check_glued_product(g1, g2, a, b, *face_tol, cfg, tol)?])
            }
            CheckBody::Transport { membrane, w, t, copies } => {
                let g = lookup(self.membrane(membrane))?;
                let (w, t) = (lookup(self.transport_integrand(w))?, lookup(self.transport_integrand(t))?);
                Ok(vec![check_higher_transport(g, &w, &t, *copies, cfg, tol)?])
            }
            CheckBody::Holonomy {
                connection,
                center,
                eps,
                level,
                min_order,
            } => {
                let conn = lookup(self.connection(connection))?;
                let report = holonomy_curvature_check(conn, center, eps, *level, cfg)?;
                let last = report.samples.last().expect("eps is non-empty");
                let m = conn.size();
                let mut checks: Vec<Check> = (0..m * m)
                    .map(|e| {
                        let name = format!("holonomy[{},{}]", e / m + 1, e % m + 1);
                        Check::compare(name, last.fitted[e], report.curvature[e], tol)
                    })
                    .collect();
                if eps.len() > 1 {
                    checks.push(match report.min_order() {
                        Some(order) => Check::at_least("holonomy.order", order, *min_order),
                        None => {
                            let worst = report.samples.iter().map(|s| s.residual).fold(0.0, f64::max);
                            Check::compare("holonomy.residual", worst, 0.0, Tolerance::absolute(ROUNDOFF))
                        }
                    });
                }
                Ok(checks)
            }
        }
    }
}

fn lookup<T>(r: Result<T, String>) -> crate::Result<T> {
    r.map_err(Error::Invalid)
}

/// Replaces the library's check-name stem with the document label, keeping
/// any `[component]` or `.part` suffix.
fn relabel(name: &str, label: &str) -> String {
    let stem = name.find(['[', '.']).unwrap_or(name.len());
    format!("{label}{}", &name[stem..])
}

fn build_membrane(
    m: &MembraneSpec,
    known: &BTreeMap<String, Membrane>,
    families: &BTreeMap<String, MembraneFamily>,
    base: &FsPath,
) -> Result<Membrane, String> {
    let sources = [
        m.components.is_some(),
        m.grid.is_some() || m.values.is_some(),
        m.line.is_some(),
        m.concat.is_some(),
        m.glue.is_some(),
        m.family.is_some(),
        m.reverse.is_some(),
        m.reparametrize.is_some(),
    ];
    if sources.iter().filter(|&&s| s).count() != 1 {
        return Err("give exactly one of components, grid, values, line, concat, glue, family, reverse, reparametrize".into());
    }
    let get = |name: &str| single(known, "membrane", name);
    let e = |err: Error| err.to_string();
    if let Some(comps) = &m.components {
        let n = take(&m.cube_dim, "cube_dim")?;
        if m.ambient_dim.is_some_and(|d| d != comps.len()) {
            return Err(format!("ambient_dim differs from the {} components", comps.len()));
        }
        let comps: Vec<&str> = comps.iter().map(String::as_str).collect();
        return Membrane::parse(n, &comps).map_err(e);
    }
    if m.grid.is_some() || m.values.is_some() {
        let [n, d, cells] = take(&m.shape, "shape")?;
        let values = match (&m.grid, &m.values) {
            (Some(file), None) => {
                let p = base.join(file);
                let text = std::fs::read_to_string(&p).map_err(|err| format!("cannot read {}: {err}", p.display()))?;
                serde_json::from_str::<Vec<f64>>(&text).map_err(|err| format!("{}: {err}", p.display()))?
            }
            (None, Some(v)) => v.clone(),
            _ => return Err("give either grid or values".into()),
        };
        return Ok(Membrane::sampled(SampleGrid::new(n, d, cells, values).map_err(e)?));
    }
    if let Some([a, b]) = &m.line {
        return Membrane::line(a, b).map_err(e);
    }
    if let Some(names) = &m.concat {
        let (first, rest) = names.split_first().ok_or("concat needs at least one path")?;
        let mut g = get(first)?.clone();
        for n in rest {
            g = concat_paths(&g, get(n)?, m.tol.unwrap_or(DEFAULT_ENDPOINT_TOL)).map_err(e)?;
        }
        return Ok(g);
    }
    if let Some([a, b]) = &m.glue {
        return glue_membranes(get(a)?, get(b)?, m.tol.unwrap_or(DEFAULT_FACE_TOL)).map_err(e);
    }
    if let Some(f) = &m.family {
        let fam = single(families, "family", f)?;
        return fam.slice(take(&m.u, "u")?).map_err(e);
    }
    if let Some(r) = &m.reverse {
        return Ok(get(r)?.reverse());
    }
    let source = get(m.reparametrize.as_deref().expect("one source is set"))?;
    let phi = parse(&take(&m.phi, "phi")?, &["t"]).map_err(|err| err.to_string())?;
    source.reparametrize(&phi).map_err(e)
}

fn build_integrand(s: &IntegrandSpec, forms: &BTreeMap<String, DifferentialForm>) -> Result<NamedIntegrand, String> {
    if s.cuts.len() != s.cube_dim {
        return Err(format!("cuts has {} entries for a {}-cube", s.cuts.len(), s.cube_dim));
    }
    let mut integrand = LabeledIntegrand::new(s.cuts.clone());
    for (i, slot) in s.slots.iter().enumerate() {
        if slot.j.len() != s.cube_dim {
            return Err(format!("slots[{i}]: j has {} entries for a {}-cube", slot.j.len(), s.cube_dim));
        }
        if integrand.slot(&slot.j).is_some() {
            return Err(format!("slots[{i}]: position {:?} is listed twice", slot.j));
        }
        let form = single(forms, "form", &slot.form).map_err(|e| format!("slots[{i}]: {e}"))?;
        let directions = slot
            .directions
            .iter()
            .map(|&d| {
                d.checked_sub(1)
                    .ok_or_else(|| format!("slots[{i}]: directions are 1-based"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        integrand = integrand.with_slot(slot.j.clone(), form.clone(), directions);
    }
    if s.designated.as_ref().is_some_and(|d| d.len() != s.cube_dim) {
        return Err("designated needs one entry per cube direction".into());
    }
    if s.designated.is_none() {
        integrand.validate().map_err(|v| v.to_string())?;
    }
    Ok(NamedIntegrand {
        integrand,
        designated: s.designated.clone(),
    })
}

fn build_connection(c: &ConnectionSpec, forms: &BTreeMap<String, DifferentialForm>) -> Result<MatrixConnection, String> {
    let e = |err: Error| err.to_string();
    match (&c.entries, &c.matrix, &c.form) {
        (Some(entries), None, None) => {
            let size = (entries.len() as f64).sqrt().round() as usize;
            if c.size.is_some_and(|s| s != size) || size * size != entries.len() {
                return Err("entries must fill a square matrix".into());
            }
            let list = entries
                .iter()
                .map(|n| single(forms, "form", n).cloned())
                .collect::<Result<Vec<_>, _>>()?;
            MatrixConnection::new(size, list).map_err(e)
        }
        (None, Some(rows), Some(f)) => {
            let size = rows.len();
            if c.size.is_some_and(|s| s != size) || rows.iter().any(|r| r.len() != size) {
                return Err("matrix must be square".into());
            }
            let a = DMatrix::from_fn(size, size, |r, col| rows[r][col]);
            MatrixConnection::scaled(&a, single(forms, "form", f)?).map_err(e)
        }
        _ => Err("give either entries, or matrix together with form".into()),
    }
}
