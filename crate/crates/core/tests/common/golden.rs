//! A fixed CLI session whose reports are compared against files in
//! `tests/golden`. Set `PHOTOSCORE_UPDATE_GOLDEN=1` to rewrite them.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use photoscore::cli::{execute, Cli};

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

fn run(work: &Path, args: &[&str]) -> String {
    let work_str = work.to_str().unwrap();
    let args: Vec<String> = args.iter().map(|a| a.replace("$WORK", work_str)).collect();
    let cli = Cli::try_parse_from(std::iter::once("photoscore".to_string()).chain(args.iter().cloned()))
        .unwrap_or_else(|e| panic!("{args:?}: {e}"));
    let mut out = Vec::new();
    execute(&cli, &mut out).unwrap_or_else(|e| panic!("{args:?}: {e}"));
    String::from_utf8(out).unwrap().replace(work_str, "$WORK")
}

fn crc_line(path: &Path) -> String {
    format!(
        "crc32\t{}\t{:08x}\n",
        path.file_name().unwrap().to_str().unwrap(),
        crc32fast::hash(&fs::read(path).unwrap())
    )
}

/// Runs every subcommand once inside `work`; returns `(golden name, report)`.
pub fn session(work: &Path) -> Vec<(&'static str, String)> {
    fs::write(
        work.join("run.toml"),
        "[train]\nepochs = 1\n\n[rsrl]\nmax_iterations = 2\nfd_threshold = 1.0\n\n[synth]\ncount = 200\n",
    )
    .unwrap();
    let fixture = golden_dir().join("one_record_ledger.txt");
    let fixture = fixture.to_str().unwrap();
    let mut out = vec![
        (
            "synth",
            run(work, &["--no-timestamp", "--config", "$WORK/run.toml", "--seed", "3", "--out", "$WORK/data", "synth"]),
        ),
        (
            "rsrl",
            run(
                work,
                &[
                    "--no-timestamp",
                    "--config",
                    "$WORK/run.toml",
                    "--seed",
                    "3",
                    "--out",
                    "$WORK/run",
                    "rsrl",
                    "--index",
                    "$WORK/data/index.csv",
                ],
            ),
        ),
        ("drops", fs::read_to_string(work.join("run/drops.txt")).unwrap()),
        ("measure", run(work, &["--no-timestamp", "measure", "$WORK/run/model_001.rsrl"])),
        ("select", run(work, &["--no-timestamp", "select", "$WORK/run/ledger.txt"])),
        ("select_t0", run(work, &["--no-timestamp", "select", "$WORK/run/ledger.txt", "--threshold", "0"])),
        ("select_one", run(work, &["--no-timestamp", "select", fixture])),
        ("eval_perclass", run(work, &["--no-timestamp", "eval", "$WORK/run/model_001.rsrl", "$WORK/data/index.csv"])),
        (
            "eval_binary",
            run(
                work,
                &["--no-timestamp", "eval", "$WORK/run/model_001.rsrl", "$WORK/data/index.csv", "--mode", "binary"],
            ),
        ),
        (
            "predict",
            run(
                work,
                &["predict", "$WORK/run/model_000.rsrl", "$WORK/run/model_001.rsrl", "$WORK/data/images/syn00000.ppm"],
            ),
        ),
    ];
    let mut explain =
        run(work, &["--out", "$WORK/explain", "explain", "$WORK/run/model_001.rsrl", "$WORK/data/images/syn00000.ppm"]);
    explain.push_str(&crc_line(&work.join("explain/syn00000.ffp.ppm")));
    explain.push_str(&crc_line(&work.join("explain/syn00000.air.ppm")));
    out.push(("explain", explain));
    out
}

/// Names of reports that differ from their golden files.
pub fn compare(reports: &[(&'static str, String)]) -> Vec<String> {
    let update = std::env::var_os("PHOTOSCORE_UPDATE_GOLDEN").is_some();
    let mut mismatched = Vec::new();
    for (name, text) in reports {
        let path = golden_dir().join(format!("{name}.txt"));
        if update {
            fs::write(&path, text).unwrap();
            continue;
        }
        match fs::read_to_string(&path) {
            Ok(want) if &want == text => {}
            Ok(want) => {
                eprintln!("--- golden {name}\n{want}\n+++ actual\n{text}");
                mismatched.push(name.to_string());
            }
            Err(e) => {
                eprintln!("golden {}: {e}", path.display());
                mismatched.push(name.to_string());
            }
        }
    }
    mismatched
}
