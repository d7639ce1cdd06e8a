//! The command-line workflow driven from code: generate, train, evaluate
//! and export, each writing its resolved configuration beside its output.
//!
//!     cargo run --release --example cli_workflow -- [work_dir]

use hisunet::cli;

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "cli_workflow".into());
    let p = |f: &str| format!("{dir}/{f}");
    let world = ["--height", "32", "--width", "32", "--n_days", "60"];
    let model = ["--stem_channels", "8"];
    let steps: Vec<Vec<String>> = vec![
        [&["generate", "--out", &p("world.sigd")][..], &world].concat(),
        [&["train", "--data", &p("world.sigd"), "--out", &p("run"), "--epochs", "2"][..], &model].concat(),
        vec!["evaluate", "--data", &p("world.sigd"), "--model", "persistence", "--out", &p("persistence.tsv")],
        [
            &["evaluate", "--data", &p("world.sigd"), "--checkpoint", &p("run/last.hsun"), "--out", &p("his_unet.tsv")][..],
            &model,
        ]
        .concat(),
        vec!["wam-export", "--checkpoint", &p("run/last.hsun"), "--out", &p("wam")],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for args in steps {
        println!("$ hisunet {}", args.join(" "));
        let code = cli::main_with(std::iter::once("hisunet".to_string()).chain(args));
        if code != 0 {
            std::process::exit(code);
        }
    }
}
