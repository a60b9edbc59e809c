use num_bigint::BigUint;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use oddreg::cli::{execute, Cli};
use oddreg::forms::{DiagonalForm, GramLattice};
use oddreg::sieve::Mode;

fn err(e: oddreg::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn lattice(form: &str) -> PyResult<GramLattice> {
    GramLattice::parse(form).and_then(|l| l.require_primitive()).map_err(err)
}

fn diagonal(form: &str) -> PyResult<DiagonalForm> {
    form.parse().map_err(err)
}

#[pyfunction]
fn smallest_w(factors: Vec<u64>, delta: u32) -> usize {
    let n: BigUint = factors.into_iter().map(BigUint::from).product();
    oddreg::arith::smallest_w(&n, delta)
}

#[pyfunction]
fn psi(eta: u8, u: i64, v: i64, w: usize) -> PyResult<usize> {
    Ok(oddreg::apbinary::psi(eta, u, v, w).map_err(err)?.value)
}

/// Diagonal `⟨a, b⟩` representing every prime `≡ η (mod 8)`, as `(a, b)`.
#[pyfunction]
#[pyo3(signature = (eta, disc_cap=1024))]
fn universal_set(eta: u8, disc_cap: i64) -> PyResult<Vec<(i64, i64)>> {
    let set = oddreg::apbinary::universal_set(eta, disc_cap).map_err(err)?;
    Ok(set.members.iter().map(|f| (f.a, f.c)).collect())
}

/// Exceptions up to `limit` on the progression picked by `mode`.
#[pyfunction]
#[pyo3(signature = (form, mode="odd", limit=100_000))]
fn exceptions(py: Python<'_>, form: &str, mode: &str, limit: u64) -> PyResult<Vec<u64>> {
    let l = lattice(form)?;
    let mode: Mode = mode.parse().map_err(err)?;
    let report = py.detach(|| oddreg::sieve::verify_regularity(&l, mode, limit)).map_err(err)?;
    Ok(report.exceptions)
}

#[pyfunction]
fn odd_profile(form: &str) -> PyResult<Vec<u32>> {
    // a list, not bytes
    Ok(oddreg::localrep::odd_profile(&lattice(form)?).map_err(err)?.into_iter().map(u32::from).collect())
}

#[pyfunction]
fn is_stable(form: &str) -> PyResult<bool> {
    Ok(oddreg::localrep::is_stable(&lattice(form)?))
}

/// `λ_p` of the form, as the six doubled-Gram entries.
#[pyfunction]
fn watson_lambda(form: &str, p: u64) -> PyResult<String> {
    Ok(oddreg::watson::lambda(&lattice(form)?, p).map_err(err)?.encode())
}

/// `(terminal, [(p, form), ...])`
#[pyfunction]
fn reduce_to_stable(form: &str) -> PyResult<(String, Vec<(u64, String)>)> {
    let chain = oddreg::watson::reduce_to_stable(&diagonal(form)?).map_err(err)?;
    Ok((chain.terminal.encode(), chain.steps.iter().map(|(p, f)| (*p, f.encode())).collect()))
}

/// Canonical Grams of every class in the genus.
#[pyfunction]
fn genus(form: &str) -> PyResult<Vec<String>> {
    let g = oddreg::genus::enumerate_genus(&lattice(form)?).map_err(err)?;
    Ok(g.classes.iter().map(|c| c.encode()).collect())
}

#[pyfunction]
fn check_prec(n: &str, k: &str, l: u64, r: u64) -> PyResult<bool> {
    let n = GramLattice::parse(n).map_err(err)?;
    let k = GramLattice::parse(k).map_err(err)?;
    Ok(oddreg::regproof::check_prec(&n, &k, l, r).map_err(err)?.holds())
}

/// `(verified, excluded square classes)` for a certificate file.
#[pyfunction]
fn check_trap(path: &str) -> PyResult<(bool, Vec<i64>)> {
    let cert = oddreg::regproof::TrapCertificate::load(std::path::Path::new(path)).map_err(err)?;
    let v = oddreg::regproof::check_trap(&cert).map_err(err)?;
    Ok((v.verified, v.excluded_values()))
}

/// Runs a CLI command in-process: `(report, exit code)`.
#[pyfunction]
fn run(py: Python<'_>, args: Vec<String>) -> PyResult<(String, i32)> {
    use clap::Parser;
    let cli = Cli::try_parse_from(std::iter::once("oddreg".to_string()).chain(args))
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.detach(|| execute(&cli)).map_err(err)
}

#[pymodule]
fn oddreg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(smallest_w, m)?)?;
    m.add_function(wrap_pyfunction!(psi, m)?)?;
    m.add_function(wrap_pyfunction!(universal_set, m)?)?;
    m.add_function(wrap_pyfunction!(exceptions, m)?)?;
    m.add_function(wrap_pyfunction!(odd_profile, m)?)?;
    m.add_function(wrap_pyfunction!(is_stable, m)?)?;
    m.add_function(wrap_pyfunction!(watson_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(reduce_to_stable, m)?)?;
    m.add_function(wrap_pyfunction!(genus, m)?)?;
    m.add_function(wrap_pyfunction!(check_prec, m)?)?;
    m.add_function(wrap_pyfunction!(check_trap, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
