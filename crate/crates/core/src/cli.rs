//! `qumbra` command line: CSV generators for the q-functions and the heat
//! solutions, plus a self-verification report.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration
//! error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Result as QResult;
use crate::heat::{self, HeatContext, HeatGeneratorSet};
use crate::lattice::{self, GeometricLattice, LatticeEquation};
use crate::opspace::{
    commutator, op_beta, op_beta_x, op_delta, op_euler, op_mult_x, op_shift, project_on_one,
    OperatorMatrix,
};
use crate::qcore::{QContext, Variant};
use crate::qfun::{self, QKind, QSeriesFunction, Scan};

#[derive(Parser, Debug)]
#[command(
    name = "qumbra",
    version,
    about = "Umbral q-calculus: series, lattices and the q-heat equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate a q-exponential or q-gaussian against its classical counterpart.
    Eval {
        #[command(flatten)]
        common: Common,
        /// exp | gauss
        #[arg(long)]
        kind: Option<String>,
    },
    /// First positive zero of the q-function over a grid of q values.
    Firstzero {
        #[command(flatten)]
        common: Common,
        /// exp | gauss
        #[arg(long)]
        kind: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        qmin: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        qmax: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        qstep: Option<String>,
    },
    /// Sample a q-heat solution on an (x, t) grid.
    Heat {
        #[command(flatten)]
        common: Common,
        /// separation | boost
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        t0: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        u0: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        tmin: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        tmax: Option<String>,
        /// Sample points per axis.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Tabulate a solution of the q-Hermite equation.
    Hermite {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        energy: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        a1: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        a2: Option<String>,
    },
    /// Run the invariant suite and report one line per property.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma-separated q values.
        #[arg(long)]
        qlist: Option<String>,
        /// Override every property's tolerance.
        #[arg(long, allow_hyphen_values = true)]
        tol: Option<String>,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, allow_hyphen_values = true)]
    q: Option<String>,
    /// right | left | sym
    #[arg(long)]
    variant: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<String>,
    /// Truncation order N.
    #[arg(long)]
    trunc: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    xmin: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    xmax: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    step: Option<String>,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat `key=value` file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

const COMMON_KEYS: [&str; 8] = [
    "q", "variant", "lambda", "trunc", "xmin", "xmax", "step", "out",
];

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(String),
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Merged flag and config-file values.
struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    fn load(common: &Common, extra: Vec<(&'static str, Option<String>)>) -> CliResult<Settings> {
        let allowed: Vec<&str> = COMMON_KEYS
            .iter()
            .copied()
            .chain(extra.iter().map(|(k, _)| *k))
            .collect();
        let mut values = BTreeMap::new();
        if let Some(path) = &common.config {
            for (key, value) in read_config(path)? {
                if !allowed.contains(&key.as_str()) {
                    return Err(usage(format!("{}: unknown key `{key}`", path.display())));
                }
                values.insert(key, value);
            }
        }
        let flags = [
            ("q", common.q.clone()),
            ("variant", common.variant.clone()),
            ("lambda", common.lambda.clone()),
            ("trunc", common.trunc.clone()),
            ("xmin", common.xmin.clone()),
            ("xmax", common.xmax.clone()),
            ("step", common.step.clone()),
            ("out", common.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (key, value) in flags.into_iter().chain(extra) {
            if let Some(v) = value {
                values.insert(key.to_string(), v);
            }
        }
        Ok(Settings { values })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn f64(&self, key: &str, default: f64) -> CliResult<f64> {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => match s.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(usage(format!("`{key}` expects a finite number, got `{s}`"))),
            },
        }
    }

    fn usize(&self, key: &str, default: usize) -> CliResult<usize> {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => s
                .trim()
                .parse()
                .map_err(|_| usage(format!("`{key}` expects a non-negative integer, got `{s}`"))),
        }
    }

    fn text(&self, key: &str, default: &str) -> String {
        self.raw(key).unwrap_or(default).trim().to_string()
    }

    fn q(&self, default: f64) -> CliResult<f64> {
        let q = self.f64("q", default)?;
        check_q(q)?;
        Ok(q)
    }

    fn variant(&self) -> CliResult<Variant> {
        Ok(self.text("variant", "right").parse::<Variant>()?)
    }

    fn trunc(&self, default: usize) -> CliResult<usize> {
        let n = self.usize("trunc", default)?;
        if n < 4 {
            return Err(usage(format!("`trunc` must be at least 4, got {n}")));
        }
        Ok(n)
    }

    fn positive(&self, key: &str, default: f64) -> CliResult<f64> {
        let v = self.f64(key, default)?;
        if v <= 0.0 {
            return Err(usage(format!("`{key}` must be positive, got {v}")));
        }
        Ok(v)
    }

    fn out(&self) -> Option<PathBuf> {
        self.raw("out").map(PathBuf::from)
    }
}

fn check_q(q: f64) -> CliResult<()> {
    if q.is_nan() || q <= 0.0 || q == 1.0 || !q.is_finite() {
        return Err(usage(format!(
            "q must be positive and different from 1, got {q}"
        )));
    }
    Ok(())
}

fn read_config(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// C-style `%.<prec>e`: `1.000000000000e+00`.
pub fn format_sci(v: f64, prec: usize) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:.prec$e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

fn num(v: f64) -> String {
    format_sci(v, 12)
}

/// Inclusive grid `start, start + step, ...` up to `end`.
fn grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let count = ((end - start) / step + 1e-9).floor() as usize;
    (0..=count).map(|i| start + i as f64 * step).collect()
}

fn x_range(s: &Settings, xmin: f64, xmax: f64, step: f64) -> CliResult<Vec<f64>> {
    let xmin = s.f64("xmin", xmin)?;
    let xmax = s.f64("xmax", xmax)?;
    let step = s.positive("step", step)?;
    if xmax < xmin {
        return Err(usage(format!("xmax ({xmax}) is below xmin ({xmin})")));
    }
    Ok(grid(xmin, xmax, step))
}

/// Output of one command: the text and the exit code it implies.
struct Report {
    text: String,
    code: i32,
}

impl Report {
    fn ok(text: String) -> Report {
        Report { text, code: 0 }
    }
}

fn emit(report: &Report, out: Option<PathBuf>) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(&path, &report.text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(report.text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn run(command: Command) -> CliResult<i32> {
    let (settings, report) = match command {
        Command::Eval { common, kind } => {
            let s = Settings::load(&common, vec![("kind", kind)])?;
            let r = cmd_eval(&s)?;
            (s, r)
        }
        Command::Firstzero {
            common,
            kind,
            qmin,
            qmax,
            qstep,
        } => {
            let s = Settings::load(
                &common,
                vec![
                    ("kind", kind),
                    ("qmin", qmin),
                    ("qmax", qmax),
                    ("qstep", qstep),
                ],
            )?;
            let r = cmd_firstzero(&s)?;
            (s, r)
        }
        Command::Heat {
            common,
            mode,
            t0,
            u0,
            tmin,
            tmax,
            grid,
        } => {
            let s = Settings::load(
                &common,
                vec![
                    ("mode", mode),
                    ("t0", t0),
                    ("u0", u0),
                    ("tmin", tmin),
                    ("tmax", tmax),
                    ("grid", grid),
                ],
            )?;
            let r = cmd_heat(&s)?;
            (s, r)
        }
        Command::Hermite {
            common,
            energy,
            a1,
            a2,
        } => {
            let s = Settings::load(&common, vec![("energy", energy), ("a1", a1), ("a2", a2)])?;
            let r = cmd_hermite(&s)?;
            (s, r)
        }
        Command::Verify { common, qlist, tol } => {
            let s = Settings::load(&common, vec![("qlist", qlist), ("tol", tol)])?;
            let r = cmd_verify(&s)?;
            (s, r)
        }
    };
    emit(&report, settings.out())?;
    Ok(report.code)
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum FunctionKind {
    Exp,
    Gauss,
}

fn function_kind(s: &Settings) -> CliResult<FunctionKind> {
    match s.text("kind", "exp").as_str() {
        "exp" => Ok(FunctionKind::Exp),
        "gauss" => Ok(FunctionKind::Gauss),
        other => Err(usage(format!(
            "unknown kind `{other}` (expected exp or gauss)"
        ))),
    }
}

fn qkind(kind: FunctionKind, lambda: f64) -> QKind {
    match kind {
        FunctionKind::Exp => QKind::Exp { lambda },
        FunctionKind::Gauss => QKind::Gauss { lambda },
    }
}

/// Lattice-recurrence value of the q-exponential, where one applies.
fn recurrence_oracle(ctx: &QContext, lambda: f64, x: f64) -> Option<f64> {
    match ctx.variant() {
        Variant::Right => lattice::recurrence_value(ctx, LatticeEquation::RightExp(lambda), x),
        // the left exponential at q is the right one at 1/q
        Variant::Left => {
            let dual = QContext::new(1.0 / ctx.q(), Variant::Right).ok()?;
            lattice::recurrence_value(&dual, LatticeEquation::RightExp(lambda), x)
        }
        Variant::Symmetric => lattice::recurrence_value(ctx, LatticeEquation::SymExp(lambda), x),
    }
}

const SPOT_TOL: f64 = 1e-9;

fn cmd_eval(s: &Settings) -> CliResult<Report> {
    let q = s.q(1.3)?;
    let variant = s.variant()?;
    let lambda = s.f64("lambda", 1.0)?;
    let order = s.trunc(200)?;
    let kind = function_kind(s)?;
    let xs = x_range(s, 0.0, 4.0, 0.1)?;
    let ctx = QContext::new(q, variant)?;
    let f = QSeriesFunction::build(qkind(kind, lambda), ctx, order)?;
    let with_recurrence = kind == FunctionKind::Exp;

    let mut text = String::from("x,continuous,q_series,converged");
    if with_recurrence {
        text.push_str(",recurrence");
    }
    text.push('\n');
    let mut checked = Vec::new();
    let mut peak: f64 = 0.0;
    for &x in &xs {
        let continuous = match kind {
            FunctionKind::Exp => (lambda * x).exp(),
            FunctionKind::Gauss => (-lambda * x * x).exp(),
        };
        let e = f.evaluate(x);
        let series = if e.converged {
            num(e.value)
        } else {
            String::new()
        };
        let _ = write!(
            text,
            "{},{},{},{}",
            num(x),
            num(continuous),
            series,
            u8::from(e.converged)
        );
        if with_recurrence {
            let r = recurrence_oracle(&ctx, lambda, x);
            let _ = write!(text, ",{}", r.map(num).unwrap_or_default());
            if e.converged {
                peak = peak.max(e.value.abs());
                if let Some(r) = r {
                    checked.push((e.value, r, peak));
                }
            }
        }
        text.push('\n');
    }
    let mut code = 0;
    if with_recurrence && !checked.is_empty() {
        // first, middle and last comparable rows
        let picks = [0, checked.len() / 2, checked.len() - 1];
        let worst = picks
            .iter()
            .map(|&i| {
                let (a, b, peak) = checked[i];
                (a - b).abs() / a.abs().max(b.abs()).max(peak).max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max);
        let verdict = if worst <= SPOT_TOL { "PASS" } else { "FAIL" };
        let _ = writeln!(
            text,
            "# recurrence_spot_check points=3 max_rel_diff={} {verdict}",
            format_sci(worst, 3)
        );
        if worst > SPOT_TOL {
            code = 1;
        }
    }
    Ok(Report { text, code })
}

fn cmd_firstzero(s: &Settings) -> CliResult<Report> {
    let kind = function_kind(s)?;
    let variant = s.variant()?;
    let default_lambda = if kind == FunctionKind::Exp { -1.0 } else { 1.0 };
    let lambda = s.f64("lambda", default_lambda)?;
    let order = s.trunc(400)?;
    let qmin = s.f64("qmin", 1.05)?;
    let qmax = s.f64("qmax", 2.0)?;
    let qstep = s.positive("qstep", 0.05)?;
    check_q(qmin)?;
    check_q(qmax)?;
    if qmax < qmin {
        return Err(usage(format!("qmax ({qmax}) is below qmin ({qmin})")));
    }
    if qmin < 1.0 && qmax > 1.0 {
        return Err(usage("the q grid must not straddle q = 1"));
    }
    let qs = grid(qmin, qmax, qstep);
    if let Some(bad) = qs.iter().find(|&&q| q == 1.0) {
        return Err(usage(format!("the q grid includes {bad}")));
    }
    let scan = Scan {
        start: s.f64("xmin", 0.0)?,
        end: s.f64("xmax", 40.0)?,
        step: s.positive("step", 0.05)?,
    };
    if scan.end <= scan.start {
        return Err(usage("xmax must exceed xmin"));
    }

    let mut text = String::from("q,first_zero\n");
    let mut notes = String::new();
    for &q in &qs {
        let ctx = QContext::new(q, variant)?;
        let f = QSeriesFunction::build(qkind(kind, lambda), ctx, order)?;
        let cell = match qfun::first_zero(&f, scan) {
            Ok(Some(z)) => num(z),
            Ok(None) => String::new(),
            Err(e) => {
                let _ = writeln!(notes, "# q={}: {e}", num(q));
                String::new()
            }
        };
        let _ = writeln!(text, "{},{}", num(q), cell);
    }
    text.push_str(&notes);
    Ok(Report::ok(text))
}

fn cmd_heat(s: &Settings) -> CliResult<Report> {
    let q = s.q(1.3)?;
    let variant = s.variant()?;
    let order = s.trunc(24)?;
    let ctx = QContext::new(q, variant)?;
    let hc = HeatContext::uniform(ctx, order, order)?;
    let u = match s.text("mode", "separation").as_str() {
        "separation" => {
            let lambda = s.positive("lambda", 1.0)?;
            heat::separation_solution(&hc, lambda)?
        }
        "boost" => {
            let t0 = s.positive("t0", 1.0)?;
            let u0 = s.f64("u0", 1.0)?;
            heat::boost_solution(&hc, t0, u0)?
        }
        other => {
            return Err(usage(format!(
                "unknown mode `{other}` (expected separation or boost)"
            )))
        }
    };
    let points = s.usize("grid", 8)?;
    if points == 0 {
        return Err(usage("`grid` must be at least 1"));
    }
    let axis = |lo: f64, hi: f64| -> Vec<f64> {
        if points == 1 {
            vec![lo]
        } else {
            (0..points)
                .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
                .collect()
        }
    };
    let (xmin, xmax) = (s.f64("xmin", 0.0)?, s.f64("xmax", 1.0)?);
    let (tmin, tmax) = (s.f64("tmin", 0.0)?, s.f64("tmax", 0.5)?);
    if xmax < xmin || tmax < tmin {
        return Err(usage("empty sample range"));
    }
    let mut text = String::from("x,t,u\n");
    for &x in &axis(xmin, xmax) {
        for &t in &axis(tmin, tmax) {
            let _ = writeln!(text, "{},{},{}", num(x), num(t), num(u.eval(x, t)));
        }
    }
    let residual = heat::pde_residual(&hc, &u)?;
    let _ = writeln!(text, "# max_pde_residual={}", num(residual));
    Ok(Report::ok(text))
}

/// Classical solution of `ψ'' + x ψ' = E ψ`, `ψ(0) = a1`, `ψ'(0) = a2`.
fn classical_hermite(energy: f64, a1: f64, a2: f64, x: f64) -> f64 {
    let mut c = [a1, a2];
    let mut sum = 0.0;
    let mut power = 1.0;
    let mut quiet = 0;
    for n in 0..2000usize {
        let term = c[n % 2] * power;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            quiet += 1;
            if quiet >= 4 {
                break;
            }
        } else {
            quiet = 0;
        }
        c[n % 2] *= (energy - n as f64) / ((n + 2) * (n + 1)) as f64;
        power *= x;
    }
    sum
}

fn cmd_hermite(s: &Settings) -> CliResult<Report> {
    let q = s.q(1.3)?;
    let variant = s.variant()?;
    let order = s.trunc(200)?;
    let energy = s.f64("energy", -1.0)?;
    let a1 = s.f64("a1", 1.0)?;
    let a2 = s.f64("a2", 0.0)?;
    let xs = x_range(s, 0.0, 2.0, 0.1)?;
    let f = QSeriesFunction::build(
        QKind::Hermite { energy, a1, a2 },
        QContext::new(q, variant)?,
        order,
    )?;
    let mut text = String::from("x,continuous,q_series,converged\n");
    for &x in &xs {
        let e = f.evaluate(x);
        let series = if e.converged {
            num(e.value)
        } else {
            String::new()
        };
        let _ = writeln!(
            text,
            "{},{},{},{}",
            num(x),
            num(classical_hermite(energy, a1, a2, x)),
            series,
            u8::from(e.converged)
        );
    }
    Ok(Report::ok(text))
}

/// One line of the verification report.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub residual: f64,
    pub tol: f64,
}

impl PropertyResult {
    pub fn passed(&self) -> bool {
        self.residual <= self.tol
    }

    pub fn line(&self) -> String {
        format!(
            "PROPERTY {} {} residual={} tol={}",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            format_sci(self.residual, 3),
            format_sci(self.tol, 1)
        )
    }
}

/// Options for [`verification_suite`].
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    pub qs: Vec<f64>,
    /// Truncation order for the operator identities.
    pub order: usize,
    /// Replaces every property's own tolerance.
    pub tol: Option<f64>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            qs: vec![0.7, 1.3, 2.0],
            order: 64,
            tol: None,
        }
    }
}

fn max_of(values: impl IntoIterator<Item = QResult<f64>>) -> QResult<f64> {
    values.into_iter().try_fold(0.0f64, |m, v| Ok(m.max(v?)))
}

/// Relative difference; magnitudes near the subnormal range count as zero.
fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-280)
}

fn prop_operator_identities(qs: &[f64], n: usize) -> QResult<f64> {
    let mut worst: f64 = 0.0;
    for &q in qs {
        let x = op_mult_x(n);
        for v in Variant::ALL {
            let c = QContext::new(q, v)?;
            let d = op_delta(&c, n);
            let b = op_beta_x(&c, n);
            let id = OperatorMatrix::identity(n);
            let t = op_shift(&c, n, false);
            let t_inv = op_shift(&c, n, true);
            worst = worst.max(commutator(&d, &b)?.interior_deviation(&id)?);
            worst = worst.max((&b * &d).interior_deviation(&op_euler(n))?);
            worst = worst.max(commutator(&op_beta(&c, n), &t)?.interior_deviation(&id.scale(0.0))?);
            let dx = commutator(&d, &x)?;
            let want = match v {
                Variant::Right => t,
                Variant::Left => t_inv,
                Variant::Symmetric => (&t.scale(q) + &t_inv).scale(1.0 / (1.0 + q)),
            };
            worst = worst.max(dx.interior_deviation(&want)?);
        }
    }
    Ok(worst)
}

fn prop_basic_polynomials(qs: &[f64]) -> QResult<f64> {
    let n_max = 40;
    let mut worst: f64 = 0.0;
    for &q in qs {
        for v in Variant::ALL {
            let c = QContext::new(q, v)?;
            let b = op_beta_x(&c, n_max);
            let mut ops = Vec::new();
            for n in 1..=n_max {
                ops.push(b.clone());
                let p = project_on_one(&ops)?;
                let want = c.umbral_factor(n as u32);
                for (k, &coef) in p.coeffs().iter().enumerate() {
                    let err = if k == n {
                        rel_diff(coef, want)
                    } else {
                        coef.abs()
                    };
                    worst = worst.max(err);
                }
            }
        }
    }
    Ok(worst)
}

/// Largest row-interior mismatch between `a f` and `b f`, each row scaled
/// by the larger side.
fn relation_residual(
    a: &OperatorMatrix,
    b: &OperatorMatrix,
    f: &crate::opspace::CoeffSeries,
) -> QResult<f64> {
    let lhs = a.apply(f)?;
    let rhs = b.apply(f)?;
    let rows = a.try_sub(b)?.interior_rows();
    Ok(rows
        .into_iter()
        .map(|r| rel_diff(lhs.coeff(r), rhs.coeff(r)))
        .fold(0.0, f64::max))
}

fn prop_qexp_eigen(qs: &[f64]) -> QResult<f64> {
    let n = 64;
    max_of(qs.iter().flat_map(|&q| {
        Variant::ALL.into_iter().map(move |v| {
            let c = QContext::new(q, v)?;
            let lambda = 0.9;
            let f = QSeriesFunction::build(QKind::Exp { lambda }, c, n)?;
            let id = OperatorMatrix::identity(n).scale(lambda);
            relation_residual(&op_delta(&c, n), &id, f.coeffs())
        })
    }))
}

fn prop_gauss_relation(qs: &[f64]) -> QResult<f64> {
    let n = 64;
    let mut worst = max_of(qs.iter().flat_map(|&q| {
        Variant::ALL.into_iter().map(move |v| {
            let c = QContext::new(q, v)?;
            let lambda = 0.6;
            let f = QSeriesFunction::build(QKind::Gauss { lambda }, c, n)?;
            relation_residual(
                &op_delta(&c, n),
                &op_beta_x(&c, n).scale(-2.0 * lambda),
                f.coeffs(),
            )
        })
    }))?;
    // right q < 1 and left q > 1 have no convergence disc at all
    for &q in qs {
        let v = if q < 1.0 {
            Variant::Right
        } else {
            Variant::Left
        };
        let r = qfun::convergence_radius(QKind::Gauss { lambda: 1.0 }, &QContext::new(q, v)?)?;
        if r != 0.0 {
            worst = f64::INFINITY;
        }
    }
    Ok(worst)
}

fn prop_shifted_power(qs: &[f64]) -> QResult<f64> {
    let n = 40;
    max_of(qs.iter().flat_map(|&q| {
        Variant::ALL.into_iter().map(move |v| {
            let c = QContext::new(q, v)?;
            let f = QSeriesFunction::build(QKind::ShiftedPower { a: 1.5, x0: 2.0 }, c, n)?;
            let g = QSeriesFunction::build(QKind::ShiftedPower { a: 0.5, x0: 2.0 }, c, n)?;
            let d = op_delta(&c, n);
            let lhs = d.apply(f.coeffs())?;
            Ok(d.interior_rows()
                .into_iter()
                .map(|r| rel_diff(lhs.coeff(r), 1.5 * g.coeffs().coeff(r)))
                .fold(0.0, f64::max))
        })
    }))
}

fn march_vs_series(f: &QSeriesFunction, march: &lattice::LatticeSolution) -> QResult<f64> {
    let mut worst: f64 = 0.0;
    for (_, x, v) in march.iter() {
        if let Some(v) = v {
            worst = worst.max(rel_diff(v, lattice::Evaluable::value_at(f, x)?));
        }
    }
    Ok(worst)
}

fn prop_march_right(qs: &[f64]) -> QResult<f64> {
    let mut qs: Vec<f64> = qs.iter().copied().filter(|&q| q > 1.0).collect();
    if qs.is_empty() {
        qs.push(1.3);
    }
    let mut worst: f64 = 0.0;
    for q in qs {
        let c = QContext::new(q, Variant::Right)?;
        for lambda in [1.0, -1.0] {
            let f = QSeriesFunction::build(QKind::Exp { lambda }, c, 400)?;
            // off every lattice x0 q^k = 1/(q-1) of exact zeros for the listed q
            let x0 = 0.77;
            let lat = GeometricLattice::new(x0, c, -20, 20)?;
            let seed = lattice::Evaluable::value_at(&f, x0)?;
            worst = worst.max(march_vs_series(
                &f,
                &lattice::march_right_exp(&lat, lambda, seed)?,
            )?);
        }
    }
    Ok(worst)
}

fn prop_march_sym(qs: &[f64]) -> QResult<f64> {
    max_of(qs.iter().map(|&q| {
        let c = QContext::new(q, Variant::Symmetric)?;
        let f = QSeriesFunction::build(QKind::Exp { lambda: 1.0 }, c, 400)?;
        let x0 = 0.1;
        // march outward: toward increasing x
        let lat = if q > 1.0 {
            GeometricLattice::new(x0, c, -1, 28)?
        } else {
            GeometricLattice::new(x0, c, -28, 1)?
        };
        let e = lattice::march_symmetric_exp(
            &lat,
            1.0,
            lattice::Evaluable::value_at(&f, x0)?,
            lattice::Evaluable::value_at(&f, x0 / q)?,
        )?;
        march_vs_series(&f, &e)
    }))
}

fn prop_hermite(qs: &[f64]) -> QResult<f64> {
    let mut worst: f64 = 0.0;
    for &q in qs {
        let c = QContext::new(q, Variant::Right)?;
        for energy in [0.0, -1.0, -2.0, -4.0, 0.5] {
            for (a1, a2) in [(1.0, 0.0), (0.0, 1.0)] {
                let f = QSeriesFunction::build(QKind::Hermite { energy, a1, a2 }, c, 40)?;
                worst = worst.max(qfun::hermite_residual_scaled(&f, 40)?);
            }
        }
    }
    Ok(worst)
}

fn prop_kummer(qs: &[f64]) -> QResult<f64> {
    let mut worst: f64 = 0.0;
    for &q in qs {
        let c = QContext::new(q, Variant::Right)?;
        for n in 1..=4usize {
            let energy = -2.0 * n as f64;
            let f = QSeriesFunction::build(
                QKind::Hermite {
                    energy,
                    a1: 0.0,
                    a2: 1.0,
                },
                c,
                30,
            )?;
            let d = f.kummer_factor()?;
            for &coef in &d.coeffs()[2 * n..] {
                worst = worst.max(coef.abs());
            }
        }
    }
    Ok(worst)
}

fn heat_ctx(q: f64, v: Variant, m: usize, n: usize) -> QResult<HeatContext> {
    HeatContext::uniform(QContext::new(q, v)?, m, n)
}

fn prop_heat_annihilation(qs: &[f64]) -> QResult<f64> {
    let mut worst: f64 = 0.0;
    for &q in qs {
        for v in Variant::ALL {
            let hc = heat_ctx(q, v, 12, 6)?;
            let l = heat::heat_operator(&hc);
            for p in heat::heat_polynomials(&hc, 10)? {
                worst = worst.max(l.apply_bi(&p)?.max_abs() / p.max_abs().max(1.0));
            }
        }
    }
    Ok(worst)
}

fn prop_separation(qs: &[f64]) -> QResult<f64> {
    max_of(qs.iter().flat_map(|&q| {
        Variant::ALL.into_iter().map(move |v| {
            let hc = heat_ctx(q, v, 24, 24)?;
            heat::pde_residual(&hc, &heat::separation_solution(&hc, 1.0)?)
        })
    }))
}

fn prop_boost(qs: &[f64]) -> QResult<f64> {
    let t0 = 1.0;
    let xs: Vec<f64> = (0..=20).map(|i| -1.0 + 0.1 * i as f64).collect();
    let ts: Vec<f64> = (0..=10).map(|i| -0.5 * t0 + 0.1 * t0 * i as f64).collect();
    max_of(qs.iter().map(|&q| {
        let hc = heat_ctx(q, Variant::Right, 24, 24)?;
        let u = heat::boost_solution(&hc, t0, 1.0)?;
        heat::pointwise_residual(&hc, &u, &xs, &ts)
    }))
}

fn prop_generator_symmetry(qs: &[f64]) -> QResult<f64> {
    let mut worst: f64 = 0.0;
    for &q in qs {
        let hc = heat_ctx(q, Variant::Right, 14, 8)?;
        let basis = heat::heat_polynomials(&hc, 4)?;
        let g = heat::generators(&hc);
        for op in g.all() {
            worst = worst.max(heat::verify_symmetry(&hc, op, &basis)?);
        }
    }
    Ok(worst)
}

fn prop_closure(qs: &[f64]) -> QResult<(f64, f64)> {
    let classical = heat::closure_of(&HeatGeneratorSet::classical(16, 16))?;
    let mut residual: f64 = 0.0;
    let mut spread: f64 = 0.0;
    for &q in qs {
        let r = heat::closure_check(&heat_ctx(q, Variant::Right, 16, 16)?)?;
        residual = residual.max(r.residual);
        spread = spread.max(r.max_difference(&classical));
    }
    Ok((residual, spread))
}

/// Runs every invariant check and returns one result per property.
pub fn verification_suite(opts: &VerifyOptions) -> Vec<PropertyResult> {
    let qs = &opts.qs;
    let value = |r: QResult<f64>| r.unwrap_or(f64::INFINITY);
    let (closure, spread) = prop_closure(qs).unwrap_or((f64::INFINITY, f64::INFINITY));
    let raw: Vec<(&'static str, f64, f64)> = vec![
        (
            "operator_identities",
            value(prop_operator_identities(qs, opts.order)),
            1e-13,
        ),
        (
            "basic_polynomials",
            value(prop_basic_polynomials(qs)),
            1e-12,
        ),
        ("qexp_eigen", value(prop_qexp_eigen(qs)), 1e-12),
        ("gauss_relation", value(prop_gauss_relation(qs)), 1e-12),
        (
            "shifted_power_derivative",
            value(prop_shifted_power(qs)),
            1e-12,
        ),
        ("series_vs_march_right", value(prop_march_right(qs)), 1e-9),
        ("series_vs_march_sym", value(prop_march_sym(qs)), 1e-9),
        ("hermite_residual", value(prop_hermite(qs)), 1e-13),
        ("kummer_termination", value(prop_kummer(qs)), 0.0),
        (
            "heat_annihilation",
            value(prop_heat_annihilation(qs)),
            1e-12,
        ),
        ("separation_residual", value(prop_separation(qs)), 1e-10),
        ("boost_residual", value(prop_boost(qs)), 1e-10),
        (
            "generator_symmetry",
            value(prop_generator_symmetry(qs)),
            1e-10,
        ),
        ("lie_closure", closure, 1e-8),
        ("closure_q_independence", spread, 1e-6),
    ];
    raw.into_iter()
        .map(|(name, residual, tol)| PropertyResult {
            name,
            residual,
            tol: opts.tol.unwrap_or(tol),
        })
        .collect()
}

fn cmd_verify(s: &Settings) -> CliResult<Report> {
    let mut opts = VerifyOptions::default();
    if let Some(list) = s.raw("qlist") {
        opts.qs = list
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| usage(format!("`qlist` entry `{}` is not a number", t.trim())))
            })
            .collect::<CliResult<_>>()?;
    }
    if s.raw("q").is_some() {
        opts.qs = vec![s.f64("q", 1.3)?];
    }
    if opts.qs.is_empty() {
        return Err(usage("`qlist` is empty"));
    }
    for &q in &opts.qs {
        check_q(q)?;
    }
    opts.order = s.trunc(64)?;
    if let Some(raw) = s.raw("tol") {
        let tol: f64 = raw
            .trim()
            .parse()
            .map_err(|_| usage(format!("`tol` expects a number, got `{raw}`")))?;
        if tol.is_nan() || tol < 0.0 {
            return Err(usage(format!("`tol` must be non-negative, got {tol}")));
        }
        opts.tol = Some(tol);
    }
    let results = verification_suite(&opts);
    let mut text = String::new();
    for r in &results {
        text.push_str(&r.line());
        text.push('\n');
    }
    let code = if results.iter().all(PropertyResult::passed) {
        0
    } else {
        1
    };
    Ok(Report { text, code })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sci_format_matches_c() {
        assert_eq!(format_sci(1.0, 12), "1.000000000000e+00");
        assert_eq!(format_sci(0.0, 12), "0.000000000000e+00");
        assert_eq!(format_sci(-2.5e-7, 3), "-2.500e-07");
        assert_eq!(format_sci(1.234e123, 1), "1.2e+123");
        assert_eq!(format_sci(f64::NAN, 3), "nan");
        assert_eq!(format_sci(f64::NEG_INFINITY, 3), "-inf");
    }

    #[test]
    fn grid_is_inclusive() {
        let g = grid(0.0, 1.0, 0.1);
        assert_eq!(g.len(), 11);
        assert!((g[10] - 1.0).abs() < 1e-12);
        assert_eq!(grid(1.05, 1.05, 0.05), vec![1.05]);
    }

    #[test]
    fn classical_hermite_gaussian() {
        for x in [0.0f64, 0.5, 1.0, 2.0] {
            let want = (-0.5 * x * x).exp();
            assert!((classical_hermite(-1.0, 1.0, 0.0, x) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn property_lines() {
        let p = PropertyResult {
            name: "demo",
            residual: 1.5e-14,
            tol: 1e-13,
        };
        assert_eq!(
            p.line(),
            "PROPERTY demo PASS residual=1.500e-14 tol=1.0e-13"
        );
        let f = PropertyResult { tol: 1e-16, ..p };
        assert!(f.line().contains(" FAIL "));
    }

    #[test]
    fn default_suite_passes() {
        for r in verification_suite(&VerifyOptions::default()) {
            assert!(r.passed(), "{}", r.line());
        }
    }

    #[test]
    fn usage_errors_exit_two() {
        let run =
            |args: &[&str]| main_with_args(std::iter::once("qumbra").chain(args.iter().copied()));
        assert_eq!(run(&["eval", "--q", "1"]), 2);
        assert_eq!(run(&["eval", "--q", "-0.5"]), 2);
        assert_eq!(run(&["eval", "--trunc", "3"]), 2);
        assert_eq!(run(&["eval", "--step", "0"]), 2);
        assert_eq!(run(&["firstzero", "--qmin", "0.8", "--qmax", "1.2"]), 2);
        assert_eq!(run(&["heat", "--mode", "separation", "--lambda", "0"]), 2);
        assert_eq!(run(&["heat", "--mode", "boost", "--t0", "-1"]), 2);
        assert_eq!(run(&["verify", "--qlist", "1.3,1"]), 2);
    }
}
