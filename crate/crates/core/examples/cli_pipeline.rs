//! The bundled configs run through the same entry point as the binary:
//! train, tournament, replicator analysis and robustness evaluation.

use std::path::Path;

fn main() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let out = std::env::temp_dir().join("riskq-pipeline");
    let f = |name: &str| fixtures.join(name).display().to_string();
    let o = |name: &str| out.join(name).display().to_string();
    let runs: Vec<Vec<String>> = vec![
        vec!["train".into(), f("mdp3_raql.toml"), "--out".into(), o("train")],
        vec!["tournament".into(), f("tournament.toml"), "--out".into(), o("tournament")],
        vec![
            "egt".into(),
            o("tournament/meta_table.csv"),
            "--out".into(),
            o("egt"),
            "--equilibria".into(),
            "--svg".into(),
        ],
        vec!["eval".into(), f("eval.toml"), "--out".into(), o("eval")],
    ];
    for args in runs {
        let code = riskq::cli::run(std::iter::once("riskq".to_string()).chain(args.iter().cloned()));
        println!("riskq {} -> exit {code}", args[0]);
    }
    println!("artifacts in {}", out.display());
}
