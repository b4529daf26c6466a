use std::path::Path;

use clap::{Args, Subcommand, ValueEnum};
use diagramma::eg::{
    eg_to_formula, equivalent_bounded, parse_eg, parse_formula, render_formula, Formula, Syntax, Verdict,
};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{io_error, CliError, Result};
use crate::Report;

#[derive(Debug, Subcommand)]
pub enum EgCommand {
    /// Read a graph file outside-in and print its formula.
    Translate(TranslateArgs),
    /// Compare two graphs or formulas on every structure up to the bound.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Notation {
    Unicode,
    Ascii,
    Latex,
}

impl From<Notation> for Syntax {
    fn from(n: Notation) -> Self {
        match n {
            Notation::Unicode => Syntax::Unicode,
            Notation::Ascii => Syntax::Ascii,
            Notation::Latex => Syntax::LatexTokens,
        }
    }
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// Graph file in s-expression notation.
    file: std::path::PathBuf,
    #[arg(long, value_enum, default_value = "unicode")]
    syntax: Notation,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Graph file, formula file, or a formula given inline.
    lhs: String,
    rhs: String,
    /// Largest domain size to search.
    #[arg(long, value_name = "N")]
    bound: Option<usize>,
    #[arg(long, value_enum, default_value = "unicode")]
    syntax: Notation,
}

impl EgCommand {
    pub fn apply(&self, config: &mut RunConfig) {
        if let EgCommand::Check(CheckArgs { bound: Some(b), .. }) = self {
            config.eg.bound = *b;
        }
    }
}

pub fn run(command: &EgCommand, config: &RunConfig) -> Result<Report> {
    match command {
        EgCommand::Translate(a) => translate(a),
        EgCommand::Check(a) => check(a, config),
    }
}

fn looks_like_graph(text: &str) -> bool {
    text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with(';')).is_some_and(|l| l.starts_with("(sheet"))
}

fn from_text(text: &str, origin: &str) -> Result<Formula> {
    if looks_like_graph(text) {
        let graph = parse_eg(text).map_err(|e| CliError::Invalid(format!("{origin}: {e}")))?;
        Ok(eg_to_formula(&graph))
    } else {
        parse_formula(text.trim()).map_err(|e| CliError::Invalid(format!("{origin}: {e}")))
    }
}

/// An existing file is read; anything path-like that does not exist is an I/O
/// error; everything else is parsed as an inline formula.
fn operand(arg: &str) -> Result<Formula> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(io_error(path))?;
        return from_text(&text, arg);
    }
    let path_like = arg.ends_with(".eg") || arg.ends_with(".txt") || (arg.contains('/') && !arg.contains('('));
    if path_like {
        return Err(CliError::Io { path: Some(path.to_path_buf()), message: "no such file".into() });
    }
    from_text(arg, "inline formula")
}

fn translate(args: &TranslateArgs) -> Result<Report> {
    let text = std::fs::read_to_string(&args.file).map_err(io_error(&args.file))?;
    let graph = parse_eg(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", args.file.display())))?;
    let formula = render_formula(&eg_to_formula(&graph), args.syntax.into());
    Ok(Report { json: json!({"formula": formula}), human: formula })
}

fn check(args: &CheckArgs, config: &RunConfig) -> Result<Report> {
    let lhs = operand(&args.lhs)?;
    let rhs = operand(&args.rhs)?;
    let syntax = args.syntax.into();
    let (l, r) = (render_formula(&lhs, syntax), render_formula(&rhs, syntax));
    let verdict = equivalent_bounded(&lhs, &rhs, config.eg.bound)?;
    let human = match &verdict {
        Verdict::Equivalent { bound } => {
            format!("lhs: {l}\nrhs: {r}\nequivalent on every structure with at most {bound} element(s)")
        }
        Verdict::CounterModel { model, lhs: lv, rhs: rv } => {
            format!("lhs: {l}\nrhs: {r}\nnot equivalent\ncounter-model: {model}\nlhs is {lv}, rhs is {rv}")
        }
    };
    Ok(Report { human, json: json!({"lhs": l, "rhs": r, "result": verdict}) })
}
