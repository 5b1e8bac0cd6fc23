//! Runs a subcommand from a config file the way the `polywave` binary does,
//! and lists the files it wrote.
//!
//! `cargo run --example config_run -- [subcommand] [out-dir]`

use polywave::config::parse_config;
use polywave::runner::{run, Subcommand};

const CONFIG: &str = "
[model]
n = 2
l = 3
cosine = 1.0
sigma = 1
amplitude = 0.0316

[numerics]
seed = 7

[run]
k = 10
";

fn main() -> polywave::Result<()> {
    let mut args = std::env::args().skip(1);
    let cmd: Subcommand = args.next().as_deref().unwrap_or("fixed-point").parse()?;
    let out = args
        .next()
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("polywave-config-run"));

    let cfg = parse_config(CONFIG)?;
    let manifest = run(cmd, &cfg, &out)?;
    for stage in &manifest.stages {
        println!("{:<16} {} {}", stage.stage, if stage.ok { "ok  " } else { "FAIL" }, stage.message.as_deref().unwrap_or(""));
    }
    for file in &manifest.outputs {
        println!("{}  {}", &file.sha256[..16], out.join(&file.name).display());
    }
    println!("exit code {}", manifest.exit_code);
    Ok(())
}
