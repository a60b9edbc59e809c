//! Command-line front end. `run` returns the process exit code:
//! 0 when everything checked agrees with the published values, 1 on a
//! discrepancy, 2 on bad input.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::apbinary::{psi, universal_set, PsiTable};
use crate::arith::smallest_w;
use crate::error::{Error, Result};
use crate::forms::{DiagonalForm, GramLattice};
use crate::genus::enumerate_genus;
use crate::localrep::{is_p_stable, is_stable, stability_case};
use crate::pipeline::{self, Classification, StableSearch};
use crate::reference;
use crate::regproof::{check_prec, check_trap, PrecReport, TrapCertificate, TrapVerdict};
use crate::sieve::{first_missed_odd, kaplansky_forms, verify_regularity, Mode, RegularityReport};
use crate::watson::{lambda, reduce_to_stable, ReductionChain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "oddreg", version, about = "Diagonal odd-regular ternary quadratic forms")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "text")]
    pub format: Format,
    /// Drop wall-clock fields so reports are byte-identical across runs.
    #[arg(long, global = true)]
    pub no_timing: bool,
    /// Data directory; overrides ODDREG_DATA_DIR.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bounded S_{d,a}-regularity check.
    Verify {
        #[arg(long)]
        form: String,
        #[arg(long, default_value = "odd")]
        mode: String,
        #[arg(long, default_value_t = 100_000)]
        limit: u64,
    },
    /// ψ_η(u, v; w).
    Psi {
        #[arg(long)]
        eta: u8,
        #[arg(long)]
        u: i64,
        #[arg(long)]
        v: i64,
        #[arg(long)]
        w: usize,
    },
    /// Recompute a published table and compare.
    Tables {
        #[arg(long)]
        which: u8,
        /// Sieve bound for the per-candidate check in table 4.
        #[arg(long, default_value_t = 100_000)]
        limit: u64,
    },
    /// λ_p of a form, its stability at p, and the reduction chain.
    Watson {
        #[arg(long)]
        form: String,
        #[arg(long)]
        p: u64,
    },
    /// Classes in the genus.
    Genus {
        #[arg(long)]
        form: String,
    },
    /// Decide N ≺_{l,r} K.
    Prec {
        #[arg(long)]
        n: String,
        #[arg(long)]
        k: String,
        #[arg(long)]
        l: u64,
        #[arg(long)]
        r: u64,
        /// Write the certificate (witness transforms) as JSON.
        #[arg(long)]
        emit: Option<PathBuf>,
    },
    /// Verify a trap certificate file.
    Trap {
        #[arg(long)]
        cert: PathBuf,
    },
    /// Run the classification up to the chosen stage.
    Enumerate {
        #[arg(long, value_enum, default_value = "full")]
        stage: Stage,
        #[arg(long, default_value_t = pipeline::SEARCH_BOUND)]
        limit: u64,
        #[arg(long, default_value_t = pipeline::DEFAULT_DISC_CAP)]
        disc_cap: i64,
        /// Write the candidate records as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite checks ruling out missing primes above 7.
    Lemma51 {
        #[arg(long, default_value_t = pipeline::SEARCH_BOUND)]
        limit: u64,
    },
    /// The three forms representing every odd integer, and ⟨1,1,1⟩ as control.
    Kaplansky {
        #[arg(long, default_value_t = 1_000_000)]
        limit: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Stable,
    Ascent,
    Full,
}

// ---------------------------------------------------------------------------
// reports

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WRow {
    pub factors: Vec<u64>,
    pub delta: u32,
    pub w: usize,
    pub published: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsiRow {
    pub eta: u8,
    pub u: i64,
    pub v: i64,
    pub w: usize,
    pub value: usize,
    pub argmax: (i64, i64),
    pub published: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniversalRow {
    pub eta: u8,
    pub forms: Vec<(i64, i64)>,
    pub published: Vec<(i64, i64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub index: usize,
    pub form: DiagonalForm,
    pub class_number: usize,
    pub method: Option<String>,
    pub published_strategy: String,
    pub status: pipeline::Status,
    pub reduces_to: DiagonalForm,
    pub odd_exception: Option<u64>,
    pub bound: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "table")]
pub enum TableReport {
    #[serde(rename = "1")]
    W { rows: Vec<WRow> },
    #[serde(rename = "2")]
    Psi { rows: Vec<PsiRow> },
    #[serde(rename = "3")]
    Universal { rows: Vec<UniversalRow> },
    #[serde(rename = "4")]
    Candidates { rows: Vec<CandidateRow> },
}

impl TableReport {
    pub fn consistent(&self) -> bool {
        match self {
            TableReport::W { rows } => rows.iter().all(|r| r.w == r.published),
            TableReport::Psi { rows } => rows.iter().all(|r| r.value == r.published),
            TableReport::Universal { rows } => rows.iter().all(|r| r.forms == r.published),
            TableReport::Candidates { rows } => rows.len() == reference::NONSTABLE_CANDIDATES.len()
                && rows.iter().all(|r| {
                    let open = r.status == pipeline::Status::Open;
                    open == reference::is_open(r.index) && r.odd_exception.is_none()
                }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatsonReport {
    pub form: DiagonalForm,
    pub p: u64,
    pub image: GramLattice,
    pub image_diagonal: Option<DiagonalForm>,
    pub p_stable: bool,
    pub stable: bool,
    pub stability_case: Option<String>,
    pub chain: ReductionChain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenusReport {
    pub form: GramLattice,
    pub class_number: usize,
    pub classes: Vec<GramLattice>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerateReport {
    pub stage: String,
    pub bound: u64,
    pub disc_cap: i64,
    pub stable_total: usize,
    pub stable_regular: usize,
    pub stable_nonregular: Vec<DiagonalForm>,
    pub ascent_nonregular: Option<Vec<DiagonalForm>>,
    pub boundary: Option<Vec<DiagonalForm>>,
    pub candidate_total: Option<usize>,
    pub open: Option<Vec<DiagonalForm>>,
    pub regular_list_matches: Option<bool>,
    pub discrepancies: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KaplanskyReport {
    pub bound: u64,
    /// First odd value missed by each form, `None` if all are represented.
    pub forms: Vec<(DiagonalForm, Option<u64>)>,
    pub control: (DiagonalForm, Option<u64>),
}

// ---------------------------------------------------------------------------

struct Out {
    format: Format,
    text: String,
}

impl Out {
    fn emit<T: Serialize>(&mut self, report: &T) -> Result<()> {
        if self.format == Format::Json {
            self.text = serde_json::to_string_pretty(report)?;
        }
        Ok(())
    }

    fn line(&mut self, s: impl AsRef<str>) {
        if self.format == Format::Text {
            self.text.push_str(s.as_ref());
            self.text.push('\n');
        }
    }
}

fn diagnostic_code(e: &Error) -> i32 {
    match e {
        Error::Internal(_) | Error::Certificate(_) => 1,
        _ => 2,
    }
}

/// Parses arguments and runs; writes the report to stdout and diagnostics
/// to stderr. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match execute(&cli) {
        Ok((text, code)) => {
            use std::io::Write;
            // a closed pipe (`| head`) is not an error of ours
            let _ = writeln!(std::io::stdout(), "{}", text.trim_end());
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            diagnostic_code(&e)
        }
    }
}

/// Runs a parsed command, returning the rendered report and exit code.
pub fn execute(cli: &Cli) -> Result<(String, i32)> {
    match cli.threads {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            pool.install(|| dispatch(cli))
        }
        Some(_) => Err(Error::InvalidArgument("--threads must be positive".into())),
        None => dispatch(cli),
    }
}

fn positive(name: &str, n: u64) -> Result<u64> {
    if n == 0 {
        return Err(Error::InvalidArgument(format!("--{name} must be positive")));
    }
    Ok(n)
}

fn parse_lattice(s: &str) -> Result<GramLattice> {
    let l = GramLattice::parse(s)?;
    l.require_primitive()
}

fn dispatch(cli: &Cli) -> Result<(String, i32)> {
    let mut out = Out { format: cli.format, text: String::new() };
    let data = cli.data_dir.clone().unwrap_or_else(pipeline::data_dir);
    let ok = |b: bool| if b { 0 } else { 1 };
    let code = match &cli.command {
        Command::Verify { form, mode, limit } => {
            let l = parse_lattice(form)?;
            let mode: Mode = mode.parse()?;
            let mut report: RegularityReport = verify_regularity(&l, mode, positive("limit", *limit)?)?;
            if cli.no_timing {
                report = report.without_timing();
            }
            out.emit(&report)?;
            out.line(format!("form {} mode {:?} bound {}", report.form.encode(), report.mode, report.bound));
            out.line(format!("exceptions: {:?}", report.exceptions));
            if let Some(t) = report.wall_time {
                out.line(format!("wall time: {t:.3} s"));
            }
            ok(report.is_clean())
        }
        Command::Psi { eta, u, v, w } => {
            let table: PsiTable = psi(*eta, *u, *v, *w)?.summary();
            out.emit(&table)?;
            out.line(table.value.to_string());
            let published = reference::PSI_ROWS
                .iter()
                .find(|(e, uu, vv, ww, _)| e == eta && uu == u && vv == v && ww == w)
                .map(|row| row.4);
            ok(published.is_none_or(|p| p == table.value))
        }
        Command::Tables { which, limit } => {
            let report = table(*which, *limit, &data)?;
            out.emit(&report)?;
            render_table(&mut out, &report);
            ok(report.consistent())
        }
        Command::Watson { form, p } => {
            let f: DiagonalForm = form.parse()?;
            if *p < 2 {
                return Err(Error::InvalidArgument("--p must be at least 2".into()));
            }
            let image = lambda(&f.lattice(), *p)?;
            let report = WatsonReport {
                form: f,
                p: *p,
                image,
                image_diagonal: image.as_diagonal(),
                p_stable: *p == 2 || is_p_stable(&f.lattice(), *p),
                stable: is_stable(&f.lattice()),
                stability_case: if *p == 2 { None } else { stability_case(&f.lattice(), *p).map(|c| format!("{c:?}")) },
                chain: reduce_to_stable(&f)?,
            };
            out.emit(&report)?;
            out.line(format!(
                "lambda_{} {} = {}",
                p,
                f,
                report.image_diagonal.map(|d| d.to_string()).unwrap_or_else(|| image.encode())
            ));
            out.line(format!("{p}-stable: {}  stable: {}", report.p_stable, report.stable));
            let chain: Vec<String> = report.chain.steps.iter().map(|(q, g)| format!("λ_{q} → {g}")).collect();
            out.line(format!("chain: {} {} ⇒ {}", f, chain.join(" "), report.chain.terminal));
            0
        }
        Command::Genus { form } => {
            let l = parse_lattice(form)?;
            let g = enumerate_genus(&l)?;
            let report = GenusReport { form: l, class_number: g.class_number, classes: g.classes.clone() };
            out.emit(&report)?;
            out.line(format!("class number {}", report.class_number));
            for c in &report.classes {
                out.line(format!("  {}", c.encode()));
            }
            0
        }
        Command::Prec { n, k, l, r, emit } => {
            let n = GramLattice::parse(n)?;
            let k = GramLattice::parse(k)?;
            let report: PrecReport = check_prec(&n, &k, positive("l", *l)?, *r)?;
            if let Some(path) = emit {
                std::fs::write(path, serde_json::to_string_pretty(&report.certificate())?)?;
            }
            out.emit(&report)?;
            out.line(format!(
                "{} ≺_{{{},{}}} {}: {} ({} of {} classes good, {} witnesses)",
                n.encode(),
                l,
                r,
                k.encode(),
                report.holds(),
                report.good,
                report.r_set_size,
                report.witnesses.len()
            ));
            ok(report.holds())
        }
        Command::Trap { cert } => {
            let c = TrapCertificate::load(cert)?;
            let verdict: TrapVerdict = check_trap(&c)?;
            out.emit(&verdict)?;
            out.line(format!("verified: {}", verdict.verified));
            out.line(format!("difference set: {:?}", verdict.difference));
            out.line(format!("excluded square classes: {:?}", verdict.excluded_values()));
            if let Some(f) = &verdict.failure {
                out.line(format!("failure: {f}"));
            }
            ok(verdict.verified)
        }
        Command::Enumerate { stage, limit, disc_cap, out: path } => {
            let limit = positive("limit", *limit)?;
            let report = enumerate(*stage, limit, *disc_cap, &data, path.as_deref())?;
            out.emit(&report)?;
            out.line(format!("stable odd-regular: {} ({} regular)", report.stable_total, report.stable_regular));
            out.line(format!("stable non-regular: {}", join(&report.stable_nonregular)));
            if let Some(a) = &report.ascent_nonregular {
                out.line(format!("non-stable non-regular: {} forms", a.len()));
            }
            if let Some(b) = &report.boundary {
                out.line(format!("above the discriminant cap: {}", join(b)));
            }
            if let Some(t) = report.candidate_total {
                out.line(format!("candidates: {t}"));
            }
            if let Some(o) = &report.open {
                out.line(format!("open: {}", join(o)));
            }
            for d in &report.discrepancies {
                out.line(format!("discrepancy: {d}"));
            }
            ok(report.discrepancies.is_empty())
        }
        Command::Lemma51 { limit } => {
            let limit = positive("limit", *limit)?;
            let stable = pipeline::stable_search(limit)?;
            let report = pipeline::missing_prime_checks(&stable.forms(), limit)?;
            out.emit(&report)?;
            out.line(format!("pairs: {} (match {})", report.pairs.len(), report.pairs_match));
            let missing = report.witnesses.iter().filter(|w| w.witness.is_none()).count();
            out.line(format!("pairs without an unrepresented witness: {missing}"));
            for s in [&report.type_one, &report.type_two] {
                out.line(format!(
                    "{:?}: {} variants, {} gaps, largest first exception {}",
                    s.kind,
                    s.variants,
                    s.gaps.len(),
                    s.largest_first_exception
                ));
            }
            out.line(format!("counting contradiction at {}: {}", report.gate_start, report.gate.contradiction));
            ok(report.holds())
        }
        Command::Kaplansky { limit } => {
            let limit = positive("limit", *limit)?;
            let forms = kaplansky_forms()
                .iter()
                .map(|f| Ok((*f, first_missed_odd(&f.lattice(), limit)?)))
                .collect::<Result<Vec<_>>>()?;
            let one = DiagonalForm::new(1, 1, 1)?;
            let control = (one, first_missed_odd(&one.lattice(), limit.min(1000))?);
            let report = KaplanskyReport { bound: limit, forms, control };
            out.emit(&report)?;
            for (f, m) in &report.forms {
                out.line(format!("{f}: first missed odd {m:?}"));
            }
            out.line(format!("control {}: first missed odd {:?}", report.control.0, report.control.1));
            ok(report.forms.iter().all(|(_, m)| m.is_none()) && report.control.1 == Some(7))
        }
    };
    Ok((out.text, code))
}

fn join(forms: &[DiagonalForm]) -> String {
    forms.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn table(which: u8, limit: u64, data: &std::path::Path) -> Result<TableReport> {
    Ok(match which {
        1 => TableReport::W {
            rows: reference::W_ROWS
                .iter()
                .map(|(factors, delta, published)| {
                    let n: BigUint = factors.iter().map(|&f| BigUint::from(f)).product();
                    WRow { factors: factors.to_vec(), delta: *delta, w: smallest_w(&n, *delta), published: *published }
                })
                .collect(),
        },
        2 => TableReport::Psi {
            rows: reference::PSI_ROWS
                .iter()
                .map(|&(eta, u, v, w, published)| {
                    let t = psi(eta, u, v, w)?;
                    Ok(PsiRow { eta, u, v, w, value: t.value, argmax: t.argmax, published })
                })
                .collect::<Result<_>>()?,
        },
        3 => TableReport::Universal {
            rows: reference::UNIVERSAL_BINARIES
                .iter()
                .map(|(eta, published)| {
                    let set = universal_set(*eta, 1024)?;
                    Ok(UniversalRow {
                        eta: *eta,
                        forms: set.members.iter().map(|f| (f.a, f.c)).collect(),
                        published: published.to_vec(),
                    })
                })
                .collect::<Result<_>>()?,
        },
        4 => {
            let traps = pipeline::load_trap_transfers(data)?;
            let verdicts = pipeline::verify_nonstable_list(limit, &traps)?;
            TableReport::Candidates {
                rows: verdicts
                    .into_iter()
                    .map(|v| CandidateRow {
                        index: v.index,
                        form: v.form,
                        class_number: v.certificate.class_number,
                        method: v.certificate.methods().iter().next_back().map(|m| format!("{m:?}").to_lowercase()),
                        published_strategy: v.published_strategy,
                        status: v.status,
                        reduces_to: v.chain.terminal,
                        odd_exception: v.odd_exception,
                        bound: v.bound,
                    })
                    .collect(),
            }
        }
        _ => return Err(Error::InvalidArgument(format!("--which must be 1, 2, 3 or 4, got {which}"))),
    })
}

fn render_table(out: &mut Out, report: &TableReport) {
    let mark = |b: bool| if b { "" } else { "  MISMATCH" };
    match report {
        TableReport::W { rows } => {
            for r in rows {
                let n: Vec<String> = r.factors.iter().map(|f| f.to_string()).collect();
                out.line(format!("{:<16} {}  {}{}", n.join("·"), r.delta, r.w, mark(r.w == r.published)));
            }
        }
        TableReport::Psi { rows } => {
            for r in rows {
                out.line(format!(
                    "psi_{}({}, {}; {}) = {}{}",
                    r.eta,
                    r.u,
                    r.v,
                    r.w,
                    r.value,
                    mark(r.value == r.published)
                ));
            }
        }
        TableReport::Universal { rows } => {
            for r in rows {
                let fs: Vec<String> = r.forms.iter().map(|(a, b)| format!("<{a},{b}>")).collect();
                out.line(format!("U(8,{}): {{{}}}{}", r.eta, fs.join(", "), mark(r.forms == r.published)));
            }
        }
        TableReport::Candidates { rows } => {
            for r in rows {
                out.line(format!(
                    "{:>2} {:<12} h={} {:<11} published={:<8} {:?} -> {}  exceptions<={}: {}",
                    r.index,
                    r.form.to_string(),
                    r.class_number,
                    r.method.clone().unwrap_or_else(|| "-".into()),
                    r.published_strategy,
                    r.status,
                    r.reduces_to,
                    r.bound,
                    r.odd_exception.map(|e| e.to_string()).unwrap_or_else(|| "none".into())
                ));
            }
        }
    }
}

fn published_nonregular() -> Vec<DiagonalForm> {
    let mut v: Vec<DiagonalForm> = reference::STABLE_NONREGULAR
        .iter()
        .map(|(_, [a, b, c])| DiagonalForm::new(*a, *b, *c).expect("published form"))
        .collect();
    v.sort();
    v
}

fn published_nonstable() -> Vec<DiagonalForm> {
    let mut v: Vec<DiagonalForm> = reference::NONSTABLE_CANDIDATES
        .iter()
        .map(|[a, b, c]| DiagonalForm::new(*a, *b, *c).expect("published form"))
        .collect();
    v.sort();
    v
}

pub fn enumerate(
    stage: Stage,
    bound: u64,
    disc_cap: i64,
    data: &std::path::Path,
    out: Option<&std::path::Path>,
) -> Result<EnumerateReport> {
    let mut discrepancies = Vec::new();
    let stable: StableSearch;
    let mut report = match stage {
        Stage::Stable => {
            stable = pipeline::stable_search(bound)?;
            if let Some(p) = out {
                std::fs::write(p, serde_json::to_string_pretty(&stable.survivors)?)?;
            }
            base_report("stable", bound, disc_cap, &stable)
        }
        Stage::Ascent => {
            stable = pipeline::stable_search(bound)?;
            let ascent = pipeline::ascent_search(&stable.forms(), disc_cap, bound)?;
            if let Some(p) = out {
                std::fs::write(p, serde_json::to_string_pretty(&ascent.found)?)?;
            }
            let mut r = base_report("ascent", bound, disc_cap, &stable);
            r.ascent_nonregular = Some(ascent.found.iter().filter(|c| !c.regular).map(|c| c.form).collect());
            r.boundary = Some(ascent.boundary.clone());
            r
        }
        Stage::Full => {
            let traps = pipeline::load_trap_transfers(data)?;
            let regular = pipeline::load_regular_list(data)?;
            let c: Classification = pipeline::classify(bound, disc_cap, &traps, Some(&regular))?;
            if let Some(p) = out {
                std::fs::write(p, serde_json::to_string_pretty(&c.candidates)?)?;
            }
            let mut r = base_report("full", bound, disc_cap, &c.stable);
            r.ascent_nonregular = Some(c.nonstable_nonregular().iter().map(|x| x.form).collect());
            r.boundary = Some(c.ascent.boundary.clone());
            r.candidate_total = Some(c.candidates.len());
            r.open = Some(c.candidates.iter().filter(|x| x.status == pipeline::Status::Open).map(|x| x.form).collect());
            r.regular_list_matches = c.regular_list_matches;
            discrepancies.extend(c.discrepancies.clone());
            r
        }
    };
    if report.stable_total != reference::STABLE_REGULAR_TOTAL + reference::STABLE_NONREGULAR.len() {
        discrepancies.push(format!("{} stable survivors", report.stable_total));
    }
    if report.stable_nonregular != published_nonregular() {
        discrepancies.push("stable non-regular survivors differ from the published eight".into());
    }
    if let Some(a) = &report.ascent_nonregular {
        if *a != published_nonstable() {
            discrepancies.push("non-stable candidates differ from the published list".into());
        }
    }
    if let Some(b) = &report.boundary {
        if !b.is_empty() {
            discrepancies.push(format!("{} forms above the discriminant cap look odd-regular", b.len()));
        }
    }
    if let Some(t) = report.candidate_total {
        if t != reference::CANDIDATE_TOTAL {
            discrepancies.push(format!("{t} candidates"));
        }
    }
    if let Some(open) = &report.open {
        let mut expected: Vec<DiagonalForm> = reference::OPEN_CANDIDATES
            .iter()
            .map(|&i| {
                let [a, b, c] = reference::nonstable(i);
                DiagonalForm::new(a, b, c).expect("published form")
            })
            .collect();
        expected.sort();
        if *open != expected {
            discrepancies.push("open set differs from the published one".into());
        }
    }
    discrepancies.sort();
    discrepancies.dedup();
    report.discrepancies = discrepancies;
    Ok(report)
}

fn base_report(stage: &str, bound: u64, disc_cap: i64, stable: &StableSearch) -> EnumerateReport {
    EnumerateReport {
        stage: stage.into(),
        bound,
        disc_cap,
        stable_total: stable.survivors.len(),
        stable_regular: stable.regular().len(),
        stable_nonregular: stable.nonregular().iter().map(|r| r.form).collect(),
        ascent_nonregular: None,
        boundary: None,
        candidate_total: None,
        open: None,
        regular_list_matches: None,
        discrepancies: vec![],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("oddreg").chain(args.iter().copied())).unwrap()
    }

    fn exec(args: &[&str]) -> (String, i32) {
        execute(&parse(args)).unwrap()
    }

    #[test]
    fn psi_prints_the_value() {
        let (text, code) = exec(&["psi", "--eta", "1", "--u", "1", "--v", "193", "--w", "16"]);
        assert_eq!((text.trim(), code), ("8", 0));
    }

    #[test]
    fn verify_reports_clean_form() {
        let (text, code) = exec(&["verify", "--form", "1,4,5", "--mode", "odd", "--limit", "20000", "--no-timing"]);
        assert_eq!(code, 0);
        assert!(text.contains("exceptions: []"));
        let (_, code) = exec(&["verify", "--form", "1,1,1", "--mode", "full", "--limit", "1000"]);
        assert_eq!(code, 0);
        let (_, code) = exec(&["verify", "--form", "1,2,7", "--mode", "odd", "--limit", "1000"]);
        assert_eq!(code, 1);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["oddreg", "verify", "--form", "1,x,5"]), 2);
        assert_eq!(run(["oddreg", "verify", "--form", "2,4,6"]), 2);
        assert_eq!(run(["oddreg", "verify", "--form", "1,1,1", "--limit", "0"]), 2);
        assert_eq!(run(["oddreg", "tables", "--which", "9"]), 2);
        assert_eq!(run(["oddreg", "frobnicate"]), 2);
        assert_eq!(run(["oddreg", "verify", "--form", "1,1,1", "--mode", "sideways"]), 2);
    }

    #[test]
    fn tables_one_to_three_match() {
        for which in ["1", "3"] {
            let (_, code) = exec(&["tables", "--which", which]);
            assert_eq!(code, 0, "table {which}");
        }
        let (text, _) = exec(&["tables", "--which", "3"]);
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("U(8,1): {<1,1>, <1,2>, <1,4>, <1,8>, <1,16>}"));
    }

    #[test]
    fn json_round_trips() {
        let (text, _) = exec(&["--format", "json", "--no-timing", "verify", "--form", "1,2,3", "--limit", "5000"]);
        let r: RegularityReport = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string_pretty(&r).unwrap(), text);
        let (text, _) = exec(&["--format", "json", "tables", "--which", "1"]);
        let t: TableReport = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string_pretty(&t).unwrap(), text);
        let (text, _) = exec(&["--format", "json", "watson", "--form", "1,5,100", "--p", "5"]);
        let w: WatsonReport = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string_pretty(&w).unwrap(), text);
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let args = |t: &'static str| vec!["--threads", t, "--format", "json", "tables", "--which", "2"];
        assert_eq!(exec(&args("1")), exec(&args("3")));
    }

    #[test]
    fn watson_and_genus() {
        let (text, _) = exec(&["watson", "--form", "1,5,100", "--p", "5"]);
        assert!(text.starts_with("lambda_5 <1,5,100> = <1,5,20>"), "{text}");
        let (text, _) = exec(&["genus", "--form", "1,4,5"]);
        assert!(text.starts_with("class number 2"));
    }

    #[test]
    fn prec_and_trap_commands() {
        // the printed mate of ⟨1,6,8⟩ against the form, odd values ≡ 1 (mod 4)
        let (text, code) = exec(&["prec", "--n", "4,8,14,0,0,4", "--k", "2,12,16,0,0,0", "--l", "4", "--r", "1"]);
        assert_eq!(code, 0, "{text}");
        assert!(text.contains(": true"));
        let cert = pipeline::data_dir().join("certs").join("trap_l3_r2.json");
        let (text, code) = exec(&["trap", "--cert", cert.to_str().unwrap()]);
        assert_eq!(code, 0);
        assert!(text.contains("excluded square classes: [8]"));
    }

    #[test]
    fn missing_data_file_is_a_usage_error() {
        assert_eq!(run(["oddreg", "trap", "--cert", "/nonexistent/cert.json"]), 2);
    }
}
