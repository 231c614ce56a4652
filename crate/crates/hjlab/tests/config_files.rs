use std::path::PathBuf;

use hjlab::config::RunConfig;
use hjlab::env::{sample_realization, verify_class};

fn configs() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    v.sort();
    v
}

#[test]
fn shipped_configs_load() {
    let files = configs();
    assert!(files.len() >= 3);
    for f in files {
        RunConfig::load(&f).unwrap_or_else(|e| panic!("{}: {e}", f.display()));
    }
}

#[test]
fn shipped_environments_are_in_the_class() {
    for f in configs() {
        let cfg = RunConfig::load(&f).unwrap();
        for &seed in &cfg.run.seeds {
            let r = sample_realization(&cfg.env, seed).unwrap();
            let rep = verify_class(&r, (-10.0, 10.0), (-4.0, 4.0), 1.0 / 32.0, 1.0 / 8.0);
            assert!(rep.passed, "{} seed {seed}: {:?}", f.display(), rep.checks);
        }
    }
}

#[test]
fn hash_depends_on_content_only() {
    let f = &configs()[0];
    let text = std::fs::read_to_string(f).unwrap();
    let a = RunConfig::from_toml(&text).unwrap();
    let b = RunConfig::load(f).unwrap();
    assert_eq!(a.hash(), b.hash());
    let c = RunConfig::from_toml(&format!("{text}\nrun.workers = 3\n")).unwrap();
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn readme_example_parses() {
    let readme =
        std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../README.md"))
            .unwrap();
    let start = readme.find("```toml\n").unwrap() + 8;
    let block = &readme[start..start + readme[start..].find("```").unwrap()];
    let cfg = RunConfig::from_toml(block).unwrap();
    assert_eq!(cfg.run.seeds, vec![0, 1, 2, 3]);
}

#[test]
fn nested_solver_keys_parse() {
    let cfg = RunConfig::from_toml(
        "cell.solver.tol = 1e-9\nparabolic.solver.sigma_policy = \"full\"\nbridge.glue.n_cap = 512",
    )
    .unwrap();
    assert_eq!(cfg.bridge.glue.n_cap, 512);
}
