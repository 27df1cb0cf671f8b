//! Python bindings for the laboratory. Groups and systems are opaque
//! handles; reports come back as plain dicts and lists so they can be fed
//! straight into notebooks. Exact rationals cross the boundary as strings,
//! numeric values as floats.

use std::collections::BTreeMap;

use ergolab::abgroup::{AbGroup, FolnerScheme, GroupElement};
use ergolab::averages::{ghk_seminorm, multi_average, u2_fourier_identity};
use ergolab::cocycles::{cl_group as cl_group_core, GroupExtension};
use ergolab::cyclo::ExactComplex;
use ergolab::nilhomog::{counterexample_f2, skew_limit_formula_compare, McConfig};
use ergolab::phases::{Phase, Symbol};
use ergolab::recurrence::{khintchine_scan, SyndeticityGap};
use ergolab::specext::{divisible_tower, spectrum as spectrum_core, verify_ab_set_identity};
use ergolab::systems::{
    abelian_extension, kronecker_factor, rotation_system, FiniteSystem, Observable, TrigPoly,
};
use num::rational::Rational64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn verr(e: impl std::fmt::Debug) -> PyErr {
    PyValueError::new_err(format!("{e:?}"))
}

#[derive(FromPyObject)]
enum RatArg {
    Int(i64),
    Str(String),
}

fn rat(arg: RatArg) -> PyResult<Rational64> {
    match arg {
        RatArg::Int(n) => Ok(Rational64::from_integer(n)),
        RatArg::Str(s) => {
            let (num, den) = match s.split_once('/') {
                Some((p, q)) => (p, q),
                None => (s.as_str(), "1"),
            };
            let p: i64 = num.trim().parse().map_err(|_| verr(&s))?;
            let q: i64 = den.trim().parse().map_err(|_| verr(&s))?;
            if q == 0 {
                return Err(PyValueError::new_err("zero denominator"));
            }
            Ok(Rational64::new(p, q))
        }
    }
}

fn sym_vals() -> BTreeMap<Symbol, f64> {
    let mut m = BTreeMap::new();
    m.insert(Symbol::new("alpha"), std::f64::consts::SQRT_2 - 1.0);
    m.insert(Symbol::new("beta"), 3f64.sqrt() - 1.0);
    m
}

fn cpx_dict<'py>(py: Python<'py>, c: &ExactComplex) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    let (re, im) = c.eval_f64(&sym_vals()).unwrap_or((f64::NAN, f64::NAN));
    d.set_item("re", re)?;
    d.set_item("im", im)?;
    d.set_item("exact", c.rational_value().map(|q| q.to_string()))?;
    Ok(d)
}

fn observable(values: Vec<(RatArg, RatArg)>, n: usize) -> PyResult<Observable> {
    if values.len() != n {
        return Err(PyValueError::new_err(format!(
            "expected {n} value pairs, got {}",
            values.len()
        )));
    }
    let i_unit = ExactComplex::from_phase(&Phase::from_rational(1, 4).unwrap());
    let mut out = Vec::with_capacity(n);
    for (re, im) in values {
        let re = rat(re)?;
        let im = rat(im)?;
        let re = ExactComplex::from_rational_i64(*re.numer(), *re.denom());
        let im = ExactComplex::from_rational_i64(*im.numer(), *im.denom());
        out.push(re.add(&im.mul(&i_unit)));
    }
    Ok(Observable { values: out })
}

fn coords(e: &GroupElement) -> Vec<i64> {
    e.coords().to_vec()
}

/// A finitely generated abelian group in invariant-factor form.
#[pyclass(frozen)]
pub struct Group {
    inner: AbGroup,
}

#[pymethods]
impl Group {
    #[staticmethod]
    fn cyclic(n: u64) -> PyResult<Group> {
        if n == 0 {
            return Err(PyValueError::new_err("order must be at least 1"));
        }
        Ok(Group { inner: AbGroup::cyclic(n) })
    }

    #[staticmethod]
    fn free(rank: usize) -> Group {
        Group { inner: AbGroup::free(rank) }
    }

    #[staticmethod]
    #[pyo3(signature = (moduli, rank=0))]
    fn product(moduli: Vec<u64>, rank: usize) -> PyResult<Group> {
        if moduli.iter().any(|&m| m == 0) {
            return Err(PyValueError::new_err("moduli must be at least 1"));
        }
        Ok(Group { inner: AbGroup::new(&moduli, rank) })
    }

    #[getter]
    fn moduli(&self) -> Vec<u64> {
        self.inner.moduli().to_vec()
    }

    #[getter]
    fn order(&self) -> Option<u64> {
        self.inner.order()
    }

    fn elements(&self) -> PyResult<Vec<Vec<i64>>> {
        let es = self.inner.elements().map_err(verr)?;
        Ok(es.iter().map(coords).collect())
    }

    fn add(&self, a: Vec<i64>, b: Vec<i64>) -> PyResult<Vec<i64>> {
        let a = self.inner.from_coords(&a).map_err(verr)?;
        let b = self.inner.from_coords(&b).map_err(verr)?;
        Ok(coords(&self.inner.add(&a, &b)))
    }

    fn scalar_mul(&self, k: i64, a: Vec<i64>) -> PyResult<Vec<i64>> {
        let a = self.inner.from_coords(&a).map_err(verr)?;
        Ok(coords(&self.inner.scalar_mul(k, &a)))
    }

    fn __repr__(&self) -> String {
        format!("Group(moduli={:?})", self.inner.moduli())
    }
}

/// A finite measure-preserving system with a marked abelian action.
#[pyclass(frozen)]
pub struct System {
    inner: FiniteSystem,
}

fn build_rotation(n: u64, shift: i64, acting: &str) -> PyResult<FiniteSystem> {
    if n == 0 {
        return Err(PyValueError::new_err("order must be at least 1"));
    }
    let z = AbGroup::cyclic(n);
    let sv = if n > 1 {
        z.scalar_mul(shift, &z.generator(0))
    } else {
        z.zero()
    };
    match acting {
        "self" => rotation_system(&z, &z, &[sv]).map_err(verr),
        "free" => rotation_system(&AbGroup::free(1), &z, &[sv]).map_err(verr),
        other => Err(PyValueError::new_err(format!(
            "acting must be \"self\" or \"free\", not {other:?}"
        ))),
    }
}

#[pymethods]
impl System {
    /// Rotation of Z/n by `shift` times the generator.
    #[staticmethod]
    #[pyo3(signature = (n, shift=1, acting="self"))]
    fn rotation(n: u64, shift: i64, acting: &str) -> PyResult<System> {
        Ok(System { inner: build_rotation(n, shift, acting)? })
    }

    /// Extension of the Z/n rotation by the carry cocycle into Z/fiber.
    /// The carry winds around the fiber, so the base acts freely.
    #[staticmethod]
    #[pyo3(signature = (n, fiber, shift=1))]
    fn carry_extension(n: u64, fiber: u64, shift: i64) -> PyResult<System> {
        if n < 2 || fiber < 2 {
            return Err(PyValueError::new_err("need n >= 2 and fiber >= 2"));
        }
        let base = build_rotation(n, shift, "free")?;
        let fg = AbGroup::cyclic(fiber);
        let s = shift.rem_euclid(n as i64) as u64;
        let table: Vec<GroupElement> = (0..n)
            .map(|x| if x + s >= n { fg.generator(0) } else { fg.zero() })
            .collect();
        let inner = abelian_extension(&base, &fg, &[table]).map_err(verr)?;
        Ok(System { inner })
    }

    #[getter]
    fn size(&self) -> usize {
        self.inner.size()
    }

    #[getter]
    fn ergodic(&self) -> bool {
        self.inner.is_ergodic()
    }

    fn component_count(&self) -> usize {
        self.inner.ergodic_components().len()
    }

    /// Invariant factors of the Kronecker group.
    fn kronecker(&self) -> PyResult<Vec<u64>> {
        let kf = kronecker_factor(&self.inner).map_err(verr)?;
        Ok(kf.group.moduli().iter().copied().filter(|&m| m != 1).collect())
    }

    #[pyo3(signature = (values, k=3))]
    fn seminorm(&self, py: Python<'_>, values: Vec<(RatArg, RatArg)>, k: usize) -> PyResult<Py<PyDict>> {
        let f = observable(values, self.inner.size())?;
        let rep = ghk_seminorm(&self.inner, &f, k).map_err(verr)?;
        let d = PyDict::new(py);
        d.set_item("k", rep.k)?;
        d.set_item("power", cpx_dict(py, &rep.power_cubic)?)?;
        d.set_item("agree", rep.agree)?;
        d.set_item("norm", rep.norm)?;
        Ok(d.unbind())
    }

    fn fourier_u2(&self, py: Python<'_>, values: Vec<(RatArg, RatArg)>) -> PyResult<Py<PyDict>> {
        let f = observable(values, self.inner.size())?;
        let rep = u2_fourier_identity(&self.inner, &f).map_err(verr)?;
        let d = PyDict::new(py);
        d.set_item("power", cpx_dict(py, &rep.power)?)?;
        d.set_item("fourier_sum", cpx_dict(py, &rep.fourier_sum)?)?;
        d.set_item("agree", rep.agree)?;
        Ok(d.unbind())
    }

    #[pyo3(signature = (coeffs, observables, radii=vec![2, 4, 8]))]
    fn multi_average(
        &self,
        py: Python<'_>,
        coeffs: Vec<i64>,
        observables: Vec<Vec<(RatArg, RatArg)>>,
        radii: Vec<u64>,
    ) -> PyResult<Py<PyDict>> {
        let fs: Vec<Observable> = observables
            .into_iter()
            .map(|v| observable(v, self.inner.size()))
            .collect::<PyResult<_>>()?;
        let rep = multi_average(&self.inner, &coeffs, &fs, &radii, &FolnerScheme::Box)
            .map_err(verr)?;
        let d = PyDict::new(py);
        let limit: Vec<Bound<'_, PyDict>> =
            rep.limit.values.iter().map(|c| cpx_dict(py, c)).collect::<PyResult<_>>()?;
        d.set_item("limit", limit)?;
        let mut windows: Vec<(u64, Vec<Bound<'_, PyDict>>)> = Vec::new();
        for (r, obs) in &rep.windows {
            let vals: Vec<Bound<'_, PyDict>> =
                obs.values.iter().map(|c| cpx_dict(py, c)).collect::<PyResult<_>>()?;
            windows.push((*r, vals));
        }
        d.set_item("windows", windows)?;
        Ok(d.unbind())
    }

    #[pyo3(signature = (a_set, a, b, epsilon=RatArg::Str("1/1000".to_string())))]
    fn khintchine(
        &self,
        py: Python<'_>,
        a_set: Vec<usize>,
        a: i64,
        b: i64,
        epsilon: RatArg,
    ) -> PyResult<Py<PyDict>> {
        let eps = rat(epsilon)?;
        let rep = khintchine_scan(&self.inner, &a_set, a, b, eps).map_err(verr)?;
        let d = PyDict::new(py);
        d.set_item("pattern", rep.pattern)?;
        d.set_item("epsilon", rep.epsilon.to_string())?;
        d.set_item("density", rep.density.to_string())?;
        d.set_item("bound", rep.bound.to_string())?;
        let corr: Vec<(Vec<i64>, String)> =
            rep.correlations.iter().map(|(g, c)| (coords(g), c.to_string())).collect();
        d.set_item("correlations", corr)?;
        d.set_item("good", rep.good.iter().map(coords).collect::<Vec<_>>())?;
        let gap = PyDict::new(py);
        match &rep.gap {
            SyndeticityGap::FiniteCover { cover_size } => {
                gap.set_item("kind", "finite_cover")?;
                gap.set_item("cover_size", cover_size)?;
            }
            SyndeticityGap::MaxGap { gap: g } => {
                gap.set_item("kind", "max_gap")?;
                gap.set_item("gap", g)?;
            }
            SyndeticityGap::Empty => gap.set_item("kind", "empty")?,
        }
        d.set_item("gap", gap)?;
        d.set_item("index_ok", rep.index_ok)?;
        d.set_item("ergodic", rep.ergodic)?;
        if let Some(c) = &rep.components {
            let cd = PyDict::new(py);
            cd.set_item("weights", c.weights.iter().map(|w| w.to_string()).collect::<Vec<_>>())?;
            cd.set_item(
                "densities",
                c.densities.iter().map(|x| x.to_string()).collect::<Vec<_>>(),
            )?;
            cd.set_item("jensen_average", c.jensen_average.to_string())?;
            cd.set_item("aggregation_exact", c.aggregation_exact)?;
            d.set_item("components", cd)?;
        } else {
            d.set_item("components", py.None())?;
        }
        Ok(d.unbind())
    }

    /// The k-th spectrum, k = 1 or 2, as multilinear phase data.
    #[pyo3(signature = (k=1))]
    fn spectrum(&self, py: Python<'_>, k: usize) -> PyResult<Py<PyDict>> {
        let rep = spectrum_core(&self.inner, k).map_err(verr)?;
        let d = PyDict::new(py);
        d.set_item("k", rep.k)?;
        d.set_item("lattice_order", rep.lattice_order)?;
        let mut elements: Vec<Bound<'_, PyDict>> = Vec::new();
        for e in &rep.elements {
            let ed = PyDict::new(py);
            let lam = PyDict::new(py);
            for (idx, phase) in &e.lambda {
                let key =
                    idx.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
                lam.set_item(key, phase.to_string())?;
            }
            ed.set_item("lambda", lam)?;
            ed.set_item("witness", e.witness.iter().map(Phase::to_string).collect::<Vec<_>>())?;
            elements.push(ed);
        }
        d.set_item("elements", elements)?;
        Ok(d.unbind())
    }

    fn __repr__(&self) -> String {
        format!("System(size={}, ergodic={})", self.inner.size(), self.inner.is_ergodic())
    }
}

/// The order-two counterexample system at truncation depth d.
#[pyfunction]
fn counterexample(py: Python<'_>, d: usize) -> PyResult<Py<PyDict>> {
    if !(2..=10).contains(&d) {
        return Err(PyValueError::new_err("d must be between 2 and 10"));
    }
    let rep = counterexample_f2(d).map_err(verr)?;
    let out = PyDict::new(py);
    out.set_item("d", rep.d)?;
    out.set_item("size", rep.system.size())?;
    out.set_item("lhs_equals_f2", rep.lhs_equals_f2)?;
    out.set_item("rhs_is_zero", rep.rhs_is_zero)?;
    out.set_item("rhs_gamma_invariant", rep.rhs_gamma_invariant)?;
    out.set_item("discrepancy_sup", rep.discrepancy_sup)?;
    out.set_item("ergodic_components", rep.ergodic_components)?;
    Ok(out.unbind())
}

fn terms_list<'py>(py: Python<'py>, p: &TrigPoly) -> PyResult<Vec<Bound<'py, PyDict>>> {
    p.terms
        .iter()
        .map(|(m, c)| {
            let d = cpx_dict(py, c)?;
            d.set_item("m", m.clone())?;
            Ok(d)
        })
        .collect()
}

/// Both sides of the skew limit formula with generic rotation parameters.
#[pyfunction]
#[pyo3(signature = (pattern, frequencies, mc_samples=0, seed=0))]
fn limit_formula(
    py: Python<'_>,
    pattern: Vec<i64>,
    frequencies: Vec<Vec<i64>>,
    mc_samples: u64,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    if frequencies.len() != pattern.len() {
        return Err(PyValueError::new_err("one frequency vector per pattern entry"));
    }
    let mut fs = Vec::new();
    for m in &frequencies {
        if m.len() != 2 {
            return Err(PyValueError::new_err("frequency vectors have 2 entries"));
        }
        fs.push(TrigPoly::character(m.clone()));
    }
    let cfg = McConfig { samples: mc_samples, seed, ..Default::default() };
    let mc = if mc_samples > 0 { Some(&cfg) } else { None };
    let rep = skew_limit_formula_compare(&pattern, &fs, mc).map_err(verr)?;
    let d = PyDict::new(py);
    d.set_item("equal", rep.equal)?;
    d.set_item("lhs_terms", terms_list(py, &rep.lhs)?)?;
    d.set_item("rhs_terms", terms_list(py, &rep.rhs)?)?;
    d.set_item("mc_residual", rep.mc_residual)?;
    Ok(d.unbind())
}

/// Root-extension tower over a system, reported stage by stage.
#[pyfunction]
#[pyo3(signature = (system, depth, roots=vec![2]))]
fn tower(py: Python<'_>, system: &System, depth: usize, roots: Vec<u64>) -> PyResult<Py<PyDict>> {
    if !(1..=6).contains(&depth) {
        return Err(PyValueError::new_err("depth must be between 1 and 6"));
    }
    if roots.is_empty() || roots.iter().any(|&n| n < 2) {
        return Err(PyValueError::new_err("roots must all be at least 2"));
    }
    let rep = divisible_tower(&system.inner, depth, &roots).map_err(verr)?;
    let mut stages: Vec<Bound<'_, PyDict>> = Vec::new();
    for s in &rep.stages {
        let sd = PyDict::new(py);
        sd.set_item("stage", s.stage)?;
        sd.set_item("size", s.size)?;
        sd.set_item("group", s.group.clone())?;
        let roots: Vec<(Vec<String>, Vec<String>)> = s
            .new_roots
            .iter()
            .map(|(lam, root)| {
                (
                    lam.iter().map(Phase::to_string).collect(),
                    root.iter().map(Phase::to_string).collect(),
                )
            })
            .collect();
        sd.set_item("new_roots", roots)?;
        sd.set_item("prior_spectrum_rooted", s.prior_spectrum_rooted)?;
        sd.set_item("ergodic", s.ergodic)?;
        stages.push(sd);
    }
    let d = PyDict::new(py);
    d.set_item("stages", stages)?;
    d.set_item("truncation_note", rep.truncation_note)?;
    Ok(d.unbind())
}

/// Exhaustive check of the two-set identity on Z/n.
#[pyfunction]
fn identity_b7(py: Python<'_>, n: u64, a: i64, b: i64) -> PyResult<Py<PyDict>> {
    if n == 0 {
        return Err(PyValueError::new_err("order must be at least 1"));
    }
    let rep = verify_ab_set_identity(&AbGroup::cyclic(n), a, b).map_err(verr)?;
    let d = PyDict::new(py);
    d.set_item("n", n)?;
    d.set_item("a", rep.a)?;
    d.set_item("b", rep.b)?;
    d.set_item("divisible", rep.divisible.to_vec())?;
    d.set_item("coprime", rep.coprime)?;
    d.set_item("hypotheses_hold", rep.hypotheses_hold)?;
    d.set_item("a_count", rep.a_count)?;
    d.set_item("b_count", rep.b_count)?;
    d.set_item("a_subset_of_b", rep.a_subset_of_b)?;
    d.set_item("b_subset_of_a", rep.b_subset_of_a)?;
    d.set_item("equal", rep.equal)?;
    d.set_item("witnesses", rep.witnesses.clone())?;
    Ok(d.unbind())
}

/// The transformation group of the depth-d truncated order-two extension.
#[pyfunction]
#[pyo3(signature = (d=2))]
fn cl_group(py: Python<'_>, d: usize) -> PyResult<Py<PyDict>> {
    if !(2..=4).contains(&d) {
        return Err(PyValueError::new_err("d must be 2, 3 or 4"));
    }
    let z = AbGroup::cyclic_power(2, d);
    let fiber = AbGroup::cyclic(4);
    let shifts: Vec<GroupElement> = (0..d).map(|i| z.generator(i)).collect();
    let zs = z.elements().map_err(verr)?;
    let tables: Vec<Vec<GroupElement>> = (0..d)
        .map(|i| {
            zs.iter()
                .map(|ze| fiber.from_coords(&[1 + 2 * ze.coords()[i]]).unwrap())
                .collect()
        })
        .collect();
    let ext = GroupExtension::new(&z, &z, &shifts, &fiber, tables).map_err(verr)?;
    let rep = cl_group_core(&ext).map_err(verr)?;
    let d_out = PyDict::new(py);
    d_out.set_item("d", d)?;
    d_out.set_item("element_count", rep.elements.len())?;
    d_out.set_item("orbit_size", rep.orbit_size)?;
    d_out.set_item("transitive", rep.transitive)?;
    d_out.set_item("two_step", rep.two_step)?;
    d_out.set_item("commutator_invariants", rep.commutator_invariants.clone())?;
    d_out.set_item("commutator_size", rep.commutator_size)?;
    d_out.set_item("stabilizer_size", rep.stabilizer.len())?;
    d_out.set_item("members_verified", rep.elements.iter().all(|e| e.is_member(&ext)))?;
    Ok(d_out.unbind())
}

#[pymodule]
fn ergolab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Group>()?;
    m.add_class::<System>()?;
    m.add_function(wrap_pyfunction!(counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(limit_formula, m)?)?;
    m.add_function(wrap_pyfunction!(tower, m)?)?;
    m.add_function(wrap_pyfunction!(identity_b7, m)?)?;
    m.add_function(wrap_pyfunction!(cl_group, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
