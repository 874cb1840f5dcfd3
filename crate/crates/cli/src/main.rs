mod config;
mod run;

use clap::{Arg, ArgMatches, Command};
use config::{parse_config_text, FileConfig, RunConfig, Subcommand};
use std::collections::BTreeMap;
use std::process::ExitCode;

fn cli() -> Command {
    let mut cmd = Command::new("tcfou")
        .about("Time-changed fractional Ornstein-Uhlenbeck toolkit")
        .subcommand_required(true)
        .arg(Arg::new("config").long("config").global(true).value_name("FILE").help("`key = value` file; flags take precedence"));
    for sub in Subcommand::ALL {
        let mut sc = Command::new(sub.name()).about(sub.about());
        for &(key, default) in sub.keys() {
            let help = match default {
                Some(d) => format!("default: {d}"),
                None => "required".to_string(),
            };
            sc = sc.arg(Arg::new(key).long(key).value_name("VALUE").help(help).allow_hyphen_values(true));
        }
        cmd = cmd.subcommand(sc);
    }
    cmd
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn resolve(name: &str, m: &ArgMatches) -> Result<RunConfig, String> {
    let sub: Subcommand = name.parse().map_err(|e: config::ConfigError| e.0)?;
    let file: Option<FileConfig> = match m.get_one::<String>("config") {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {path}: {e}"))?;
            Some(parse_config_text(&text).map_err(|e| format!("{path}: {e}"))?)
        }
        None => None,
    };
    let flags: BTreeMap<String, String> =
        sub.keys().iter().filter_map(|&(k, _)| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone()))).collect();
    RunConfig::resolve(sub, file.as_ref(), &flags).map_err(|e| e.0)
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("TCFOU_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| format!("TCFOU_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let info = !e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if info { 0 } else { 1 });
        }
    };
    if let Err(e) = init_threads() {
        return fail(e);
    }
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let cfg = match resolve(name, sub) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    match run::run(&cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("check failed: {}", cfg.raw("check"));
            ExitCode::from(2)
        }
        Err(e) => fail(e),
    }
}
