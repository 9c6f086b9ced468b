mod args;
mod commands;
mod manifest;
mod plot;

use std::path::PathBuf;

use clap::{CommandFactory, FromArgMatches};
use lunet::Error;

use crate::args::Cli;

const EXIT_USAGE: i32 = 2;
const EXIT_DATA: i32 = 3;
const EXIT_NUMERICAL: i32 = 4;

fn main() {
    std::process::exit(run(std::env::args().collect()));
}

fn run(argv: Vec<String>) -> i32 {
    let (argv, config_file) = match expand_config(argv) {
        Ok(v) => v,
        Err(e) => return report(e),
    };
    let matches = Cli::command()
        .mut_subcommands(|s| s.args_override_self(true))
        .try_get_matches_from(&argv)
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match matches {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match commands::run(cli.command, argv, config_file) {
        Ok(()) => 0,
        Err(e) => report(e),
    }
}

fn report(e: anyhow::Error) -> i32 {
    eprintln!("error: {e:#}");
    exit_code(&e)
}

fn exit_code(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<Error>() {
        Some(Error::InvalidConfig(_) | Error::InvalidSpec(_)) => EXIT_USAGE,
        Some(le) if le.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_DATA,
    }
}

/// Replaces `--config PATH` with the flags the file holds, placed right after
/// the subcommand so that flags given on the command line win.
fn expand_config(mut argv: Vec<String>) -> anyhow::Result<(Vec<String>, Option<PathBuf>)> {
    let Some(pos) = argv.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok((argv, None));
    };
    let path = match argv[pos].strip_prefix("--config=") {
        Some(p) => {
            let p = p.to_string();
            argv.remove(pos);
            p
        }
        None if pos + 1 < argv.len() => {
            argv.remove(pos);
            argv.remove(pos)
        }
        None => return Err(Error::InvalidConfig("--config needs a path".into()).into()),
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::InvalidConfig(format!("reading config {path}: {e}")))?;
    let extra = lunet::config::config_to_args(&text)?;
    let sub = argv.iter().skip(1).position(|a| !a.starts_with('-')).map_or(argv.len(), |i| i + 2);
    argv.splice(sub..sub, extra);
    Ok((argv, Some(PathBuf::from(path))))
}
