//! `jetext`: command-line driver for the LMI checks, Whitney decompositions
//! and extension operators.

mod commands;
mod config;
mod error;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{RunConfig, KEYS};
use error::{CliError, CliResult};

const SUBCOMMANDS: &[(&str, &str)] = &[
    ("gen", "generate a set and write its point file"),
    ("lmi", "LMI(1) verdict and the spanning / band / Markov table"),
    ("markov", "Markov factors along the ladder and the fitted exponent"),
    ("decompose", "Whitney decomposition, partition checks and the estimate chain"),
    ("extend", "classical and full extensions: reproduction and continuity tables"),
    ("moments", "weight, annulus constants, moment measures and their convergence"),
];

fn cli() -> Command {
    let config_args: Vec<Arg> = KEYS
        .iter()
        .map(|(key, default, help)| {
            let help = if default.is_empty() { help.to_string() } else { format!("{help} [default: {default}]") };
            Arg::new(*key).long(*key).value_name("VALUE").help(help).allow_hyphen_values(true)
        })
        .collect();
    let mut cmd = Command::new("jetext")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Whitney jets on sampled compact sets")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for (name, about) in SUBCOMMANDS {
        let mut sub = Command::new(*name)
            .about(*about)
            .arg(Arg::new("config").long("config").value_name("FILE").help("key = value configuration file"))
            .args(config_args.clone());
        match *name {
            "gen" => sub = sub.arg(Arg::new("output").long("output").short('o').value_name("FILE").help("point file (default: stdout)")),
            "lmi" => {
                sub = sub.arg(Arg::new("expect-pass").long("expect-pass").action(ArgAction::SetTrue).help("exit with status 3 unless the verdict is pass"))
            }
            _ => {}
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

fn resolve(m: &ArgMatches) -> CliResult<RunConfig> {
    let file = match m.get_one::<String>("config") {
        Some(path) => config::load_file(&PathBuf::from(path))?,
        None => BTreeMap::new(),
    };
    let flags: BTreeMap<String, String> =
        KEYS.iter().filter_map(|(k, _, _)| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone()))).collect();
    RunConfig::resolve(&file, &flags)
}

fn run(name: &str, m: &ArgMatches) -> CliResult<i32> {
    let cfg = resolve(m)?;
    match name {
        "gen" => commands::gen(&cfg, m.get_one::<String>("output").map(PathBuf::from).as_deref())?,
        "lmi" => {
            let verdict = commands::lmi(&cfg)?;
            if m.get_flag("expect-pass") && verdict != jetext::lmi::Verdict::Pass {
                return Ok(3);
            }
        }
        "markov" => commands::markov(&cfg)?,
        "decompose" => commands::decompose(&cfg)?,
        "extend" => commands::extend(&cfg)?,
        "moments" => commands::moments(&cfg)?,
        other => return Err(CliError::Usage(format!("unknown command '{other}'"))),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    match run(name, sub) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("jetext {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        cli().debug_assert();
    }

    #[test]
    fn flags_reach_the_config() {
        let m = cli().try_get_matches_from(["jetext", "lmi", "--set", "disk", "--eps_ladder", "2^-3..2^-4", "--expect-pass"]).unwrap();
        let (name, sub) = m.subcommand().unwrap();
        assert_eq!(name, "lmi");
        let cfg = resolve(sub).unwrap();
        assert_eq!(cfg.set, "disk");
        assert_eq!(cfg.eps_ladder, vec![0.125, 0.0625]);
        assert!(sub.get_flag("expect-pass"));
    }
}
