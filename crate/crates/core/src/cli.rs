//! Command-line front end. Every command prints one JSON [`Report`] on stdout.
//!
//! Exit codes: 0 passed, 1 failed, 2 inconclusive, 3 usage or input error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::bracket::{axiom_report, default_margin, SectionSampler};
use crate::chartman::partition_of_unity;
use crate::connection::{accordance, validate_connection};
use crate::correspondence::{f_map, g_map, verify_inverse_bundle, verify_inverse_connection, RoundTripReport};
use crate::error::{Error, Result};
use crate::io::{
    algebra_to_file, bundle_to_file, connection_to_file, load_algebra, load_bundle, load_connection, to_json, write_json,
};
use crate::lab::{check_delta_continuity, validate_lab};
use crate::liealg::validate_algebra;
use crate::{fixtures, Tolerances, ValidationReport};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

pub const FIXTURE_DIR_ENV: &str = "ALGEBROID_FIXTURE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub passed: bool,
    pub inconclusive: bool,
    pub residuals: BTreeMap<String, f64>,
    pub artifacts: Vec<String>,
    pub seed: u64,
    /// Command-specific extras.
    pub details: Value,
}

impl Report {
    fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            passed: false,
            inconclusive: false,
            residuals: BTreeMap::new(),
            artifacts: Vec::new(),
            seed: 0,
            details: Value::Object(Default::default()),
        }
    }

    fn detail(&mut self, key: &str, value: impl Serialize) {
        if let Value::Object(map) = &mut self.details {
            map.insert(key.to_string(), serde_json::to_value(value).expect("serializable"));
        }
    }

    fn absorb(&mut self, v: &ValidationReport) {
        self.passed = v.passed;
        self.residuals.extend(v.residuals.clone());
        if let Some(w) = &v.worst {
            self.detail("worst", w);
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_PASS
        } else if self.inconclusive {
            EXIT_INCONCLUSIVE
        } else {
            EXIT_FAIL
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "algebroid", about = "Couplings of Lie algebra bundles with the tangent bundle")]
struct Cli {
    #[command(flatten)]
    tol: TolArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct TolArgs {
    #[arg(long, global = true)]
    alg_tol: Option<f64>,
    #[arg(long, global = true)]
    acc_tol: Option<f64>,
    #[arg(long, global = true)]
    trans_tol: Option<f64>,
    #[arg(long, global = true)]
    inner_tol: Option<f64>,
}

impl TolArgs {
    fn resolve(&self) -> Tolerances {
        let mut t = Tolerances::default();
        t.alg = self.alg_tol.unwrap_or(t.alg);
        t.acc = self.acc_tol.unwrap_or(t.acc);
        t.trans = self.trans_tol.unwrap_or(t.trans);
        t.inner = self.inner_tol.unwrap_or(t.inner);
        t
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check antisymmetry and the Jacobi identity of a structure tensor.
    ValidateAlgebra {
        #[arg(long)]
        algebra: String,
    },
    /// Check frames and transitions of a bundle.
    ValidateLab {
        #[arg(long)]
        bundle: String,
        /// Overrides the automorphism tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Check that transitions vary by inner automorphisms.
    CheckDelta {
        #[arg(long)]
        bundle: String,
        /// Overrides the inner-decision tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Check the coupling condition on a connection.
    CheckCoupling {
        #[arg(long)]
        connection: String,
    },
    /// Build the bundle of a coupling by parallel transport.
    FMap {
        #[arg(long)]
        connection: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a coupling from a delta-continuous bundle.
    GMap {
        #[arg(long)]
        bundle: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run f and g back to back and compare with the input.
    Roundtrip {
        #[arg(long, conflicts_with = "connection", required_unless_present = "connection")]
        bundle: Option<String>,
        #[arg(long)]
        connection: Option<String>,
    },
    /// Check skew symmetry, Leibniz and Jacobi of the induced bracket.
    Axioms {
        #[arg(long)]
        connection: String,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// List or write the shipped fixtures.
    Fixtures {
        #[arg(long, conflicts_with = "emit", required_unless_present = "emit")]
        list: bool,
        #[arg(long)]
        emit: Option<String>,
        /// Output directory; defaults to $ALGEBROID_FIXTURE_DIR or the current directory.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

/// Runs the CLI on `argv` (including the program name), printing to the process streams.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn run_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = write!(err, "{}", e.render());
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_PASS,
                _ => EXIT_USAGE,
            };
        }
    };
    let tol = cli.tol.resolve();
    match execute(cli.command, &tol) {
        Ok(report) => {
            let code = report.exit_code();
            let _ = out.write_all(to_json(&report).expect("serializable").as_bytes());
            let _ = writeln!(
                err,
                "{}: {}",
                report.command,
                match code {
                    EXIT_PASS => "passed",
                    EXIT_INCONCLUSIVE => "inconclusive",
                    _ => "failed",
                }
            );
            code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn execute(command: Command, tol: &Tolerances) -> Result<Report> {
    match command {
        Command::ValidateAlgebra { algebra } => {
            let g = load_algebra(&algebra)?;
            let mut r = Report::new("validate-algebra");
            r.absorb(&validate_algebra(&g, tol.alg));
            r.detail("name", g.name());
            r.detail("dim", g.dim());
            if r.passed {
                r.detail("derivations_dim", g.derivations_basis().len());
                r.detail("center_dim", g.center_basis().len());
            }
            Ok(r)
        }
        Command::ValidateLab { bundle, tol: t } => {
            let b = load_bundle(&bundle)?;
            let mut tol = *tol;
            tol.alg = t.unwrap_or(tol.alg);
            let mut r = Report::new("validate-lab");
            r.absorb(&validate_lab(&b, &tol));
            Ok(r)
        }
        Command::CheckDelta { bundle, tol: t } => {
            let b = load_bundle(&bundle)?;
            let mut tol = *tol;
            tol.inner = t.unwrap_or(tol.inner);
            let mut r = Report::new("check-delta");
            let d = check_delta_continuity(&b, &tol)?;
            r.passed = d.passed;
            r.inconclusive = !d.passed && d.undecided && d.outer_count() == 0;
            r.residuals.insert("inner".into(), d.max_inner_residual());
            r.detail("outer", d.outer_count());
            r.detail("undecided", d.undecided_count());
            r.detail("regions", &d.regions);
            Ok(r)
        }
        Command::CheckCoupling { connection } => {
            let c = load_connection(&connection)?;
            let mut r = Report::new("check-coupling");
            let v = validate_connection(&c, tol);
            let a = accordance(&c, tol);
            r.residuals.extend(v.residuals.clone());
            r.residuals.insert("accordance".into(), a.max_residual);
            r.residuals.insert("max_curvature".into(), a.max_curvature);
            r.residuals.insert("max_omega_norm".into(), a.max_omega_norm);
            r.passed = v.passed && a.passed;
            r.detail("connection_valid", v.passed);
            r.detail("accordance", a.passed);
            if let Some(w) = v.worst.or(a.worst) {
                r.detail("worst", w);
            }
            Ok(r)
        }
        Command::FMap { connection, out } => {
            let c = load_connection(&connection)?;
            let mut r = Report::new("f-map");
            match f_map(&c, tol) {
                Ok(f) => {
                    r.passed = f.theorem_holds;
                    r.inconclusive = !f.theorem_holds && f.delta.undecided && f.delta.outer_count() == 0;
                    r.residuals.insert("transition_automorphism".into(), f.transition_aut_residual);
                    r.residuals.insert("transport_automorphism".into(), f.transport_aut_residual);
                    r.residuals.insert("delta_inner".into(), f.delta.max_inner_residual());
                    r.detail("outer", f.delta.outer_count());
                    r.detail("undecided", f.delta.undecided_count());
                    write_json(&out, &bundle_to_file(&f.trivialization))?;
                    r.artifacts.push(out.display().to_string());
                }
                Err(Error::Precondition(msg)) => r.detail("reason", msg),
                Err(e) => return Err(e),
            }
            Ok(r)
        }
        Command::GMap { bundle, out } => {
            let t = load_bundle(&bundle)?;
            let h = partition_of_unity(&t.manifold)?;
            let mut r = Report::new("g-map");
            match g_map(&t, &h, tol) {
                Ok(c) => {
                    let a = accordance(&c, tol);
                    r.passed = a.passed;
                    r.residuals.insert("accordance".into(), a.max_residual);
                    r.residuals.insert("max_curvature".into(), a.max_curvature);
                    write_json(&out, &connection_to_file(&c))?;
                    r.artifacts.push(out.display().to_string());
                }
                Err(Error::Precondition(msg)) => r.detail("reason", msg),
                Err(e) => return Err(e),
            }
            Ok(r)
        }
        Command::Roundtrip { bundle, connection } => {
            let rt: RoundTripReport = match (bundle, connection) {
                (Some(b), _) => {
                    let t = load_bundle(&b)?;
                    verify_inverse_bundle(&t, &partition_of_unity(&t.manifold)?, tol)?
                }
                (None, Some(c)) => {
                    let c = load_connection(&c)?;
                    verify_inverse_connection(&c, &partition_of_unity(&c.bundle.manifold)?, tol)?
                }
                (None, None) => return Err(Error::Input("roundtrip needs --bundle or --connection".into())),
            };
            let mut r = Report::new("roundtrip");
            r.passed = rt.passed;
            r.inconclusive = rt.inconclusive && !rt.passed;
            r.residuals = rt.residuals.clone();
            r.detail("direction", rt.direction);
            r.detail("undecided", rt.undecided);
            if let Some(reason) = &rt.reason {
                r.detail("reason", reason);
            }
            Ok(r)
        }
        Command::Axioms { connection, trials, seed } => {
            let c = load_connection(&connection)?;
            let a = accordance(&c, tol);
            let margin = default_margin(&c.bundle.manifold);
            let ax = axiom_report(&c, &a.curvature, trials, seed, &SectionSampler::default(), margin)?;
            let mut r = Report::new("axioms");
            r.seed = seed;
            r.residuals.insert("skew".into(), ax.skew);
            r.residuals.insert("leibniz".into(), ax.leibniz);
            r.residuals.insert("jacobi".into(), ax.jacobi);
            r.residuals.insert("accordance".into(), a.max_residual);
            r.passed = a.passed && ax.skew == 0.0 && ax.leibniz <= tol.fd;
            r.detail("trials", trials);
            r.detail("jacobi_margin", margin);
            Ok(r)
        }
        Command::Fixtures { list, emit, dir } => {
            let mut r = Report::new("fixtures");
            if list {
                r.passed = true;
                r.detail("algebras", fixtures::ALGEBRAS);
                r.detail("manifolds", fixtures::MANIFOLDS);
                r.detail("bundles", fixtures::BUNDLES);
                r.detail("connections", fixtures::CONNECTIONS);
                return Ok(r);
            }
            let name = emit.expect("clap enforces --list or --emit");
            let dir = dir
                .or_else(|| std::env::var_os(FIXTURE_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            let path = dir.join(format!("{name}.json"));
            emit_fixture(&name, &path, tol, &mut r)?;
            r.artifacts.push(path.display().to_string());
            r.detail("name", name);
            Ok(r)
        }
    }
}

/// Writes fixture `name` after running the checks that fit its kind.
fn emit_fixture(name: &str, path: &std::path::Path, tol: &Tolerances, r: &mut Report) -> Result<()> {
    if let Some(g) = fixtures::algebra(name) {
        r.detail("kind", "algebra");
        r.absorb(&validate_algebra(&g, tol.alg));
        return write_json(path, &algebra_to_file(&g));
    }
    if let Some(m) = fixtures::manifold(name) {
        r.detail("kind", "manifold");
        r.passed = true;
        return write_json(path, &m.to_spec());
    }
    if let Some(t) = fixtures::bundle(name) {
        r.detail("kind", "bundle");
        r.absorb(&validate_lab(&t, tol));
        let d = check_delta_continuity(&t, tol)?;
        r.residuals.insert("inner".into(), d.max_inner_residual());
        r.detail("delta", d.passed);
        return write_json(path, &bundle_to_file(&t));
    }
    if let Some(c) = fixtures::connection(name) {
        r.detail("kind", "connection");
        r.absorb(&validate_connection(&c, tol));
        return write_json(path, &connection_to_file(&c));
    }
    Err(Error::Input(format!("unknown fixture {name:?}")))
}
