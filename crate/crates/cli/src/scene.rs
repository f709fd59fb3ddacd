//! Scene files: a JSON description (schema version 1) of named currents,
//! forms and kernels plus numerical defaults.  Loading validates the whole
//! file and reports every violation, not just the first.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use derham_core::currents::{CellDomain, Current, PolyChain, PolyhedralCell};
use derham_core::expr::parse_scalar_expr;
use derham_core::forms::{AffineMap, DifferentialForm, Multiindex};
use derham_core::geometry::Aabb;
use derham_core::intersection::EpsSchedule;
use derham_core::mollifier::KernelKind;
use derham_core::quad::QuadratureConfig;
use derham_core::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub schema: u32,
    /// Ambient dimension shared by every entry.
    pub dim: usize,
    #[serde(default)]
    pub currents: BTreeMap<String, CurrentSpec>,
    #[serde(default)]
    pub forms: BTreeMap<String, FormSpec>,
    /// Kernel names mapped to `bump-product` or `bump-product-wide`.
    #[serde(default)]
    pub kernels: BTreeMap<String, String>,
    #[serde(default)]
    pub quadrature: Option<QuadSpec>,
    #[serde(default)]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default)]
    pub experiments: BTreeMap<String, ExperimentSpec>,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CurrentSpec {
    Segment {
        start: Vec<f64>,
        end: Vec<f64>,
        #[serde(default = "default_weight")]
        weight: f64,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
        #[serde(default = "default_weight")]
        weight: f64,
    },
    Simplex {
        vertices: Vec<Vec<f64>>,
        #[serde(default = "default_weight")]
        weight: f64,
    },
    /// A k-cell embedded by an affine map: columns span the cell.
    Cell {
        matrix: Vec<Vec<f64>>,
        translation: Vec<f64>,
        #[serde(default = "default_weight")]
        weight: f64,
    },
    Dirac {
        point: Vec<f64>,
        /// 1-based covector axes.
        covector: Vec<usize>,
        #[serde(default = "default_weight")]
        weight: f64,
    },
    Smooth {
        form: String,
    },
    Sum {
        terms: Vec<SumTerm>,
    },
    Boundary {
        of: String,
    },
    Wedge {
        current: String,
        form: String,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SumTerm {
    pub coeff: f64,
    pub current: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormSpec {
    pub degree: usize,
    pub terms: Vec<FormTerm>,
    #[serde(default)]
    pub support: Option<BoxSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormTerm {
    /// 1-based axes of the basis covector, strictly increasing.
    pub axes: Vec<usize>,
    /// Coefficient expression over `x1..xm`.
    pub coeff: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSpec {
    pub resolution: Option<f64>,
    pub min_nodes: Option<usize>,
    pub max_nodes: Option<usize>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub eps0: Option<f64>,
    pub ratio: Option<f64>,
    pub levels: Option<usize>,
}

/// Experiment request; operand fields name scene entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentSpec {
    Evaluate {
        current: String,
        form: String,
    },
    Mollify {
        current: String,
        form: String,
        #[serde(default)]
        eps: Vec<f64>,
    },
    Homotopy {
        current: String,
        form: String,
        #[serde(default)]
        eps: Vec<f64>,
    },
    Density {
        current: String,
        /// 1-based plane axes.
        plane: Vec<usize>,
        anchor: Vec<f64>,
        #[serde(default)]
        radii: Vec<f64>,
    },
    Polar {
        current: String,
        plane: Vec<usize>,
        anchor: Vec<f64>,
        direction: Vec<f64>,
        #[serde(default)]
        lambdas: Vec<f64>,
        #[serde(default)]
        radii: Vec<f64>,
    },
    Atom {
        current: String,
        plane: Vec<usize>,
        anchor: Vec<f64>,
        #[serde(default)]
        radii: Vec<f64>,
    },
    Intersect {
        t1: String,
        t2: String,
        form: String,
    },
    Commutativity {
        t1: String,
        t2: String,
        form: String,
        #[serde(default)]
        eps: Vec<f64>,
    },
    ReproduceEx46 {
        #[serde(default)]
        dim: Option<usize>,
    },
    ReproduceKronecker {},
}

/// Fully resolved scene.
pub struct Scene {
    pub dim: usize,
    pub currents: BTreeMap<String, Current>,
    pub forms: BTreeMap<String, DifferentialForm>,
    pub kernels: BTreeMap<String, KernelKind>,
    pub quadrature: QuadratureConfig,
    pub schedule: EpsSchedule,
    pub experiments: BTreeMap<String, ExperimentSpec>,
}

impl Scene {
    /// Empty scene used when an experiment needs no operands.
    pub fn empty(dim: usize) -> Scene {
        Scene {
            dim,
            currents: BTreeMap::new(),
            forms: BTreeMap::new(),
            kernels: BTreeMap::new(),
            quadrature: QuadratureConfig::default(),
            schedule: EpsSchedule::default(),
            experiments: BTreeMap::new(),
        }
    }
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path)?;
    let file: SceneFile = serde_json::from_str(&text)?;
    resolve_scene(&file)
}

fn one_based(axes: &[usize], m: usize, what: &str, errs: &mut Vec<String>) -> Option<Multiindex> {
    if axes.iter().any(|&a| a == 0 || a > m) {
        errs.push(format!(
            "{what}: axes {axes:?} must be 1-based and at most {m}"
        ));
        return None;
    }
    match Multiindex::new(axes.iter().map(|a| a - 1).collect()) {
        Ok(idx) => Some(idx),
        Err(e) => {
            errs.push(format!("{what}: {e}"));
            None
        }
    }
}

pub fn resolve_scene(file: &SceneFile) -> Result<Scene> {
    let mut errs: Vec<String> = Vec::new();
    if file.schema != SCHEMA_VERSION {
        errs.push(format!(
            "unsupported schema version {}; this build reads version {SCHEMA_VERSION}",
            file.schema
        ));
    }
    let m = file.dim;
    if m == 0 {
        errs.push("ambient dimension must be positive".into());
    }

    let mut forms: BTreeMap<String, DifferentialForm> = BTreeMap::new();
    for (name, spec) in &file.forms {
        let what = format!("form {name:?}");
        let mut terms = Vec::new();
        let mut ok = true;
        for t in &spec.terms {
            if t.axes.len() != spec.degree {
                errs.push(format!(
                    "{what}: term axes {:?} do not match degree {}",
                    t.axes, spec.degree
                ));
                ok = false;
                continue;
            }
            let Some(idx) = one_based(&t.axes, m, &what, &mut errs) else {
                ok = false;
                continue;
            };
            match parse_scalar_expr(&t.coeff, m) {
                Ok(mut field) => {
                    if let Some(b) = &spec.support {
                        if b.lo.len() != m || b.hi.len() != m {
                            errs.push(format!("{what}: support box dimension mismatch"));
                            ok = false;
                            continue;
                        }
                        field = field.with_support_box(Aabb::new(b.lo.clone(), b.hi.clone()));
                    }
                    terms.push((idx, field));
                }
                Err(e) => {
                    errs.push(format!("{what}: coefficient {:?}: {e}", t.coeff));
                    ok = false;
                }
            }
        }
        if ok {
            match DifferentialForm::from_terms(m, spec.degree, terms) {
                Ok(f) => {
                    forms.insert(name.clone(), f);
                }
                Err(e) => errs.push(format!("{what}: {e}")),
            }
        }
    }

    let mut kernels: BTreeMap<String, KernelKind> = BTreeMap::new();
    for (name, kind) in &file.kernels {
        match kind.as_str() {
            "bump-product" => {
                kernels.insert(name.clone(), KernelKind::BumpProduct);
            }
            "bump-product-wide" => {
                kernels.insert(name.clone(), KernelKind::BumpProductWide);
            }
            other => errs.push(format!(
                "kernel {name:?}: unknown kind {other:?} (expected bump-product or bump-product-wide)"
            )),
        }
    }

    // currents may reference forms and each other; resolve in passes so
    // order in the file does not matter
    let mut currents: BTreeMap<String, Current> = BTreeMap::new();
    let mut pending: Vec<(&String, &CurrentSpec)> = file.currents.iter().collect();
    loop {
        let before = pending.len();
        let mut still: Vec<(&String, &CurrentSpec)> = Vec::new();
        for (name, spec) in pending {
            match build_current(name, spec, m, &forms, &currents, &mut errs) {
                BuildOutcome::Done(c) => {
                    currents.insert(name.clone(), c);
                }
                BuildOutcome::Failed => {}
                BuildOutcome::Waiting => still.push((name, spec)),
            }
        }
        pending = still;
        if pending.is_empty() || pending.len() == before {
            break;
        }
    }
    for (name, spec) in pending {
        let refs = current_refs(spec);
        errs.push(format!(
            "current {name:?}: unresolved or cyclic reference(s) {refs:?}"
        ));
    }

    let mut quadrature = QuadratureConfig::default();
    if let Some(q) = &file.quadrature {
        if let Some(r) = q.resolution {
            if r <= 0.0 {
                errs.push(format!("quadrature resolution must be positive, got {r}"));
            } else {
                quadrature.resolution = r;
            }
        }
        if let Some(n) = q.min_nodes {
            quadrature.min_nodes = n.max(2);
        }
        if let Some(n) = q.max_nodes {
            quadrature.max_nodes = n.max(quadrature.min_nodes);
        }
    }

    let mut schedule = EpsSchedule::default();
    if let Some(s) = &file.schedule {
        match EpsSchedule::new(
            s.eps0.unwrap_or(schedule.eps0),
            s.ratio.unwrap_or(schedule.ratio),
            s.levels.unwrap_or(schedule.levels),
        ) {
            Ok(sch) => schedule = sch,
            Err(e) => errs.push(format!("schedule: {e}")),
        }
    }

    for (name, exp) in &file.experiments {
        validate_experiment(name, exp, &currents, &forms, &file.currents, &mut errs);
    }

    if errs.is_empty() {
        Ok(Scene {
            dim: m,
            currents,
            forms,
            kernels,
            quadrature,
            schedule,
            experiments: file.experiments.clone(),
        })
    } else {
        Err(Error::Scene(errs))
    }
}

enum BuildOutcome {
    Done(Current),
    Failed,
    Waiting,
}

fn current_refs(spec: &CurrentSpec) -> Vec<String> {
    match spec {
        CurrentSpec::Sum { terms } => terms.iter().map(|t| t.current.clone()).collect(),
        CurrentSpec::Boundary { of } => vec![of.clone()],
        CurrentSpec::Wedge { current, .. } => vec![current.clone()],
        _ => Vec::new(),
    }
}

fn build_current(
    name: &str,
    spec: &CurrentSpec,
    m: usize,
    forms: &BTreeMap<String, DifferentialForm>,
    done: &BTreeMap<String, Current>,
    errs: &mut Vec<String>,
) -> BuildOutcome {
    let what = format!("current {name:?}");
    let fail = |errs: &mut Vec<String>, msg: String| {
        errs.push(msg);
        BuildOutcome::Failed
    };
    match spec {
        CurrentSpec::Segment { start, end, weight } => {
            if start.len() != m || end.len() != m {
                return fail(errs, format!("{what}: endpoint dimension mismatch"));
            }
            match PolyChain::segment(start, end, *weight) {
                Ok(c) => BuildOutcome::Done(Current::PolyChain(c)),
                Err(e) => fail(errs, format!("{what}: {e}")),
            }
        }
        CurrentSpec::Box { lo, hi, weight } => {
            if lo.len() != m || hi.len() != m {
                return fail(errs, format!("{what}: box dimension mismatch"));
            }
            match PolyhedralCell::axis_box(lo, hi, *weight)
                .and_then(|cell| PolyChain::new(m, m, vec![cell]))
            {
                Ok(c) => BuildOutcome::Done(Current::PolyChain(c)),
                Err(e) => fail(errs, format!("{what}: {e}")),
            }
        }
        CurrentSpec::Simplex { vertices, weight } => {
            if vertices.iter().any(|v| v.len() != m) {
                return fail(errs, format!("{what}: vertex dimension mismatch"));
            }
            let k = vertices.len().saturating_sub(1);
            match PolyhedralCell::simplex(vertices, *weight)
                .and_then(|cell| PolyChain::new(m, k, vec![cell]))
            {
                Ok(c) => BuildOutcome::Done(Current::PolyChain(c)),
                Err(e) => fail(errs, format!("{what}: {e}")),
            }
        }
        CurrentSpec::Cell {
            matrix,
            translation,
            weight,
        } => {
            if translation.len() != m || matrix.len() != m {
                return fail(errs, format!("{what}: map dimension mismatch"));
            }
            let k = matrix.first().map_or(0, Vec::len);
            match AffineMap::new(matrix.clone(), translation.clone())
                .and_then(|map| PolyhedralCell::new(CellDomain::Cube, map, *weight))
                .and_then(|cell| PolyChain::new(m, k, vec![cell]))
            {
                Ok(c) => BuildOutcome::Done(Current::PolyChain(c)),
                Err(e) => fail(errs, format!("{what}: {e}")),
            }
        }
        CurrentSpec::Dirac {
            point,
            covector,
            weight,
        } => {
            if point.len() != m {
                return fail(errs, format!("{what}: point dimension mismatch"));
            }
            match one_based(covector, m, &what, errs) {
                Some(idx) => BuildOutcome::Done(Current::Dirac {
                    point: point.clone(),
                    idx,
                    weight: *weight,
                }),
                None => BuildOutcome::Failed,
            }
        }
        CurrentSpec::Smooth { form } => match forms.get(form) {
            Some(f) => BuildOutcome::Done(Current::Smooth(f.clone())),
            None => fail(errs, format!("{what}: undefined form {form:?}")),
        },
        CurrentSpec::Sum { terms } => {
            if terms.iter().any(|t| !done.contains_key(&t.current)) {
                return BuildOutcome::Waiting;
            }
            let parts = terms
                .iter()
                .map(|t| (t.coeff, done[&t.current].clone()))
                .collect();
            match Current::sum(parts) {
                Ok(c) => BuildOutcome::Done(c),
                Err(e) => fail(errs, format!("{what}: {e}")),
            }
        }
        CurrentSpec::Boundary { of } => match done.get(of) {
            Some(c) => BuildOutcome::Done(c.boundary()),
            None => BuildOutcome::Waiting,
        },
        CurrentSpec::Wedge { current, form } => {
            let Some(f) = forms.get(form) else {
                return fail(errs, format!("{what}: undefined form {form:?}"));
            };
            match done.get(current) {
                Some(c) => match c.wedge_smooth(f) {
                    Ok(w) => BuildOutcome::Done(w),
                    Err(e) => fail(errs, format!("{what}: {e}")),
                },
                None => BuildOutcome::Waiting,
            }
        }
    }
}

fn validate_experiment(
    name: &str,
    exp: &ExperimentSpec,
    currents: &BTreeMap<String, Current>,
    forms: &BTreeMap<String, DifferentialForm>,
    declared: &BTreeMap<String, CurrentSpec>,
    errs: &mut Vec<String>,
) {
    let what = format!("experiment {name:?}");
    let need_current = |n: &String, errs: &mut Vec<String>| {
        // a current that failed to build was already reported; only flag
        // names never declared at all
        if !currents.contains_key(n) && !declared.contains_key(n) {
            errs.push(format!("{what}: undefined current {n:?}"));
        }
    };
    let need_form = |n: &String, errs: &mut Vec<String>| {
        if !forms.contains_key(n) {
            errs.push(format!("{what}: undefined form {n:?}"));
        }
    };
    match exp {
        ExperimentSpec::Evaluate { current, form }
        | ExperimentSpec::Mollify { current, form, .. }
        | ExperimentSpec::Homotopy { current, form, .. } => {
            need_current(current, errs);
            need_form(form, errs);
        }
        ExperimentSpec::Density { current, .. }
        | ExperimentSpec::Polar { current, .. }
        | ExperimentSpec::Atom { current, .. } => {
            need_current(current, errs);
        }
        ExperimentSpec::Intersect { t1, t2, form }
        | ExperimentSpec::Commutativity { t1, t2, form, .. } => {
            need_current(t1, errs);
            need_current(t2, errs);
            need_form(form, errs);
        }
        ExperimentSpec::ReproduceEx46 { dim } => {
            if let Some(d) = dim {
                if !(2..=3).contains(d) {
                    errs.push(format!("{what}: built-in family covers dimensions 2 and 3"));
                }
            }
        }
        ExperimentSpec::ReproduceKronecker {} => {}
    }
}
