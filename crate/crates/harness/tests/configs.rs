//! The shipped configuration files load and pass validation.

use std::path::PathBuf;

use velgan_harness::RunConfig;

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn desk_config_matches_the_defaults() {
    let cfg = RunConfig::load(Some(&shipped("desk.toml")), &[]).unwrap();
    let mut want = RunConfig::default();
    want.train.eval_every = 1;
    want.train.checkpoint_every = 5;
    assert_eq!(cfg, want);
}

#[test]
fn full_scale_config_is_valid() {
    let cfg = RunConfig::load(Some(&shipped("full.toml")), &[]).unwrap();
    assert_eq!(cfg.preprocess.patch_size, 512);
    assert_eq!((cfg.preprocess.n_train, cfg.preprocess.n_test), (2000, 800));
    assert_eq!(cfg.train.epochs, 80);
}
