//! Layer a profile and overrides, then run a subcommand pipeline in memory.

use bluetrap::app::{layered_config, run_subcommand, Command, RunInputs};
use bluetrap::config::{emit_config, parse_config, shipped_profile};

fn main() -> bluetrap::Result<()> {
    let profile = shipped_profile("detect").expect("shipped");
    let config = layered_config(profile, None, &["detect.tau=20 us".into(), "detect.trials=0".into()])?;
    let text = emit_config(&config);
    assert_eq!(parse_config(&text)?, config);
    println!("config hash {}", config.hash());

    let out = run_subcommand(Command::Detect, &config, &RunInputs::default())?;
    print!("{}", out.report);
    for f in &out.files {
        println!("{} ({} bytes)", f.name, f.contents.len());
    }
    Ok(())
}
