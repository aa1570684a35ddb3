//! Drives the command-line workflow in-process: synth, label, train,
//! evaluate and predict into a temporary directory.

use std::fs;

use complication_risk::cli::main_with_args;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let dir = tmp.path();
    let config = dir.join("run.toml");
    fs::write(
        &config,
        "master_seed = 3\nn_search = 2\nn_bootstrap = 100\nfamilies = [\"lr\"]\n\
         [paths]\ninput = \"synth/cohort.jsonl\"\nmodels = \"train/models.json\"\n\
         [synth]\nn_encounters = 600\n",
    )?;
    let config = config.display().to_string();
    for (cmd, extra) in [
        ("synth", None),
        ("label", None),
        ("train", None),
        ("evaluate", None),
        ("predict", Some("--percent")),
    ] {
        let out = dir.join(cmd).display().to_string();
        let mut args = vec!["complication-risk", cmd, "--config", &config, "--out", &out];
        args.extend(extra);
        let code = main_with_args(args);
        println!("{cmd:<9} exit {code}");
    }
    let preds = fs::read_to_string(dir.join("predict/predictions.csv"))?;
    for line in preds.lines().take(4) {
        println!("  {line}");
    }
    Ok(())
}
