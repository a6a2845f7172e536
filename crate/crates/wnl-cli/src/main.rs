//! wnl: command line checks for weakly nonlocal Hamiltonian operators.
//!
//! Subcommands parse problem files, validate skew-adjointness, compute
//! Schouten brackets with either or both engines, resolve Hamiltonian
//! flows, and print the bundled example systems.  Exit codes: 0 success,
//! 1 usage or parse error, 2 validation failure (including the two engines
//! disagreeing), 3 a `--assert-zero` check found a nonzero bracket.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use wnl_core::calculus::hamiltonian_flow;
use wnl_core::frontend::{
    bundled_example, dist_report, op_report, parse_expression, parse_problem, print_expression,
    print_operator_entry, render_canonical, render_dist, render_flow, FrontendError, Problem,
    SystemDecl, EXAMPLES,
};
use wnl_core::{distform, opform, WeaklyNonlocalOperator};

#[derive(Parser)]
#[command(name = "wnl", version, about = "Exact checks for weakly nonlocal Hamiltonian operators")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Engine {
    /// Operator-symbol engine only
    Op,
    /// Distribution-kernel engine only
    Dist,
    /// Run both engines and require matching verdicts
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a problem file and summarize its operators
    Parse {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Check operators for skew-adjointness
    Skew {
        file: PathBuf,
        /// Restrict the check to one named operator
        #[arg(long)]
        op: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Jacobi check: the Schouten bracket of an operator with itself
    Jacobi {
        file: PathBuf,
        #[arg(long)]
        op: String,
        #[arg(long, value_enum, default_value_t = Engine::Both)]
        engine: Engine,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Exit 3 unless the bracket is zero
        #[arg(long)]
        assert_zero: bool,
    },
    /// Schouten bracket of two named operators
    Schouten {
        file: PathBuf,
        #[arg(long)]
        left: String,
        #[arg(long)]
        right: String,
        #[arg(long, value_enum, default_value_t = Engine::Both)]
        engine: Engine,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        assert_zero: bool,
    },
    /// Compatibility check: the bracket of two operators must vanish
    Compat {
        file: PathBuf,
        /// Two operator names, comma separated
        #[arg(long, value_delimiter = ',')]
        ops: Vec<String>,
        #[arg(long, value_enum, default_value_t = Engine::Both)]
        engine: Engine,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(long)]
        assert_zero: bool,
    },
    /// Hamiltonian flow u_t = P delta H / delta u
    Flow {
        file: PathBuf,
        #[arg(long)]
        op: String,
        /// Density of the Hamiltonian functional, in the expression grammar
        #[arg(long)]
        hamiltonian: String,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// List the bundled example systems, or print one
    Examples { name: Option<String> },
}

enum Failure {
    Usage(String),
    Validation(String),
    AssertZero,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Validation(_) => 2,
            Failure::AssertZero => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) | Failure::Validation(m) => m.clone(),
            Failure::AssertZero => "assertion failed: the bracket is not zero".to_string(),
        }
    }
}

fn front_fail(e: FrontendError) -> Failure {
    match e {
        FrontendError::Parse { .. } => Failure::Usage(e.to_string()),
        FrontendError::Validation { .. } => Failure::Validation(e.to_string()),
    }
}

fn load(path: &PathBuf) -> Result<Problem, Failure> {
    let src = fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("{}: {}", path.display(), e)))?;
    parse_problem(&src).map_err(front_fail)
}

fn pick<'a>(prob: &'a Problem, name: &str) -> Result<&'a WeaklyNonlocalOperator, Failure> {
    prob.operator(name)
        .ok_or_else(|| Failure::Validation(format!("no operator named {name}")))
}

/// First skew-adjointness defect, if any: an offending local entry of
/// P + P^+ or an asymmetric coupling matrix.
fn skew_witness(op: &WeaklyNonlocalOperator, sys: &SystemDecl) -> Option<String> {
    let report = op.skew_report();
    if !report.c_symmetric {
        return Some("tail coupling matrix is not symmetric".to_string());
    }
    let n = op.components() as usize;
    for i in 0..n {
        for j in 0..n {
            let defect = report.local_defect.entry(i, j);
            if !defect.is_zero() {
                return Some(format!(
                    "entry ({},{}) of P + P^+ is {}",
                    i + 1,
                    j + 1,
                    print_operator_entry(defect, sys)
                ));
            }
        }
    }
    None
}

fn require_skew(op: &WeaklyNonlocalOperator, sys: &SystemDecl) -> Result<(), Failure> {
    match skew_witness(op, sys) {
        None => Ok(()),
        Some(w) => Err(Failure::Validation(format!(
            "operator {} is not skew-adjoint: {w}",
            op.name()
        ))),
    }
}

/// One engine's bracket result, ready for either output format.
struct RunOut {
    text: String,
    json: Value,
    zero: bool,
}

fn op_run(a: &WeaklyNonlocalOperator, b: &WeaklyNonlocalOperator, sys: &SystemDecl) -> RunOut {
    let start = Instant::now();
    let bracket = opform::schouten_bracket(a, b);
    let ms = start.elapsed().as_millis() as u64;
    let zero = bracket.is_zero();
    let mut text = format!(
        "[op] [{},{}] {} ({} ms)\n",
        a.name(),
        b.name(),
        if zero { "= 0" } else { "!= 0" },
        ms
    );
    if !zero {
        text.push_str(&render_canonical(&bracket.canonical, sys));
    }
    let report = op_report(&bracket, sys, ms);
    RunOut { text, json: serde_json::to_value(report).expect("report serializes"), zero }
}

fn dist_run(a: &WeaklyNonlocalOperator, b: &WeaklyNonlocalOperator, sys: &SystemDecl) -> RunOut {
    let start = Instant::now();
    let bracket = distform::schouten_bracket(a, b);
    let ms = start.elapsed().as_millis() as u64;
    let zero = bracket.is_zero();
    let mut text = format!(
        "[dist] [{},{}] {} ({} ms)\n",
        a.name(),
        b.name(),
        if zero { "= 0" } else { "!= 0" },
        ms
    );
    if !zero {
        text.push_str(&render_dist(&bracket, sys));
    }
    let report = dist_report(&bracket, sys, ms);
    RunOut { text, json: serde_json::to_value(report).expect("report serializes"), zero }
}

fn emit(format: Format, outs: &[RunOut]) {
    match format {
        Format::Text => {
            for out in outs {
                print!("{}", out.text);
            }
        }
        Format::Json => {
            let doc = if outs.len() == 1 {
                outs[0].json.clone()
            } else {
                Value::Array(outs.iter().map(|o| o.json.clone()).collect())
            };
            println!("{}", serde_json::to_string_pretty(&doc).expect("json prints"));
        }
    }
}

fn bracket_cmd(
    file: &PathBuf,
    left: &str,
    right: &str,
    engine: Engine,
    format: Format,
    assert_zero: bool,
) -> Result<(), Failure> {
    let prob = load(file)?;
    let sys = &prob.system;
    let a = pick(&prob, left)?;
    let b = pick(&prob, right)?;
    require_skew(a, sys)?;
    require_skew(b, sys)?;
    let mut outs = Vec::new();
    if engine != Engine::Dist {
        outs.push(op_run(a, b, sys));
    }
    if engine != Engine::Op {
        outs.push(dist_run(a, b, sys));
    }
    emit(format, &outs);
    if outs.len() == 2 && outs[0].zero != outs[1].zero {
        return Err(Failure::Validation(format!(
            "engines disagree on [{},{}]: op reports {}, dist reports {}",
            left,
            right,
            if outs[0].zero { "zero" } else { "nonzero" },
            if outs[1].zero { "zero" } else { "nonzero" },
        )));
    }
    if assert_zero && outs.iter().any(|o| !o.zero) {
        return Err(Failure::AssertZero);
    }
    Ok(())
}

fn parse_cmd(file: &PathBuf, format: Format) -> Result<(), Failure> {
    let prob = load(file)?;
    match format {
        Format::Text => {
            println!("components: {}", prob.system.components);
            if !prob.system.parameters.is_empty() {
                println!("parameters: {}", prob.system.parameters.join(" "));
            }
            for named in &prob.operators {
                let (deg, ord) = named.operator.order_data();
                println!(
                    "operator {}: degree {}, max jet order {}, tails {}",
                    named.name,
                    deg,
                    ord,
                    named.operator.tail_count()
                );
            }
        }
        Format::Json => {
            let ops: Vec<Value> = prob
                .operators
                .iter()
                .map(|named| {
                    let (deg, ord) = named.operator.order_data();
                    json!({
                        "name": named.name,
                        "degree": deg,
                        "max_jet_order": ord,
                        "tails": named.operator.tail_count(),
                    })
                })
                .collect();
            let doc = json!({
                "components": prob.system.components,
                "parameters": prob.system.parameters,
                "operators": ops,
            });
            println!("{}", serde_json::to_string_pretty(&doc).expect("json prints"));
        }
    }
    Ok(())
}

fn skew_cmd(file: &PathBuf, only: Option<&str>, format: Format) -> Result<(), Failure> {
    let prob = load(file)?;
    let sys = &prob.system;
    let mut rows = Vec::new();
    match only {
        Some(name) => {
            let op = pick(&prob, name)?;
            rows.push((name.to_string(), skew_witness(op, sys)));
        }
        None => {
            for named in &prob.operators {
                rows.push((named.name.clone(), skew_witness(&named.operator, sys)));
            }
        }
    }
    match format {
        Format::Text => {
            for (name, witness) in &rows {
                match witness {
                    None => println!("{name}: skew"),
                    Some(w) => println!("{name}: not skew ({w})"),
                }
            }
        }
        Format::Json => {
            let doc: Vec<Value> = rows
                .iter()
                .map(|(name, witness)| {
                    json!({ "operator": name, "skew": witness.is_none(), "witness": witness })
                })
                .collect();
            println!("{}", serde_json::to_string_pretty(&doc).expect("json prints"));
        }
    }
    if let Some((name, _)) = rows.iter().find(|(_, w)| w.is_some()) {
        return Err(Failure::Validation(format!("operator {name} is not skew-adjoint")));
    }
    Ok(())
}

fn flow_cmd(file: &PathBuf, op: &str, hamiltonian: &str, format: Format) -> Result<(), Failure> {
    let prob = load(file)?;
    let sys = &prob.system;
    let p = pick(&prob, op)?;
    let h = parse_expression(hamiltonian, sys).map_err(front_fail)?;
    let flow = hamiltonian_flow(p, &h);
    match format {
        Format::Text => print!("{}", render_flow(&flow, sys)),
        Format::Json => {
            let comps: Vec<Value> = flow
                .components
                .iter()
                .map(|c| {
                    let nonlocal: Vec<Value> = c
                        .nonlocal
                        .iter()
                        .map(|(outer, integrand)| {
                            json!([print_expression(outer, sys), print_expression(integrand, sys)])
                        })
                        .collect();
                    json!({ "local": print_expression(&c.local, sys), "nonlocal": nonlocal })
                })
                .collect();
            let doc = json!({ "components": comps, "fully_local": flow.fully_local });
            println!("{}", serde_json::to_string_pretty(&doc).expect("json prints"));
        }
    }
    Ok(())
}

fn examples_cmd(name: Option<&str>) -> Result<(), Failure> {
    match name {
        None => {
            for (n, _) in EXAMPLES {
                println!("{n}");
            }
            Ok(())
        }
        Some(n) => match bundled_example(n) {
            Some(src) => {
                print!("{src}");
                Ok(())
            }
            None => Err(Failure::Validation(format!("no bundled example named {n}"))),
        },
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Parse { file, format } => parse_cmd(&file, format),
        Cmd::Skew { file, op, format } => skew_cmd(&file, op.as_deref(), format),
        Cmd::Jacobi { file, op, engine, format, assert_zero } => {
            bracket_cmd(&file, &op, &op, engine, format, assert_zero)
        }
        Cmd::Schouten { file, left, right, engine, format, assert_zero } => {
            bracket_cmd(&file, &left, &right, engine, format, assert_zero)
        }
        Cmd::Compat { file, ops, engine, format, assert_zero } => {
            if ops.len() != 2 {
                return Err(Failure::Usage(
                    "--ops takes exactly two comma separated operator names".to_string(),
                ));
            }
            bracket_cmd(&file, &ops[0], &ops[1], engine, format, assert_zero)
        }
        Cmd::Flow { file, op, hamiltonian, format } => {
            flow_cmd(&file, &op, &hamiltonian, format)
        }
        Cmd::Examples { name } => examples_cmd(name.as_deref()),
    }
}

fn main() -> ExitCode {
    // die quietly when a downstream pager or head closes the pipe,
    // instead of panicking on the failed write
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests arrive as clap "errors" but are not
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
