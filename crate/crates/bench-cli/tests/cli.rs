use std::process::Command;

use bench_cli::run::{read_csv, BenchRecord, GrainRecord, Mode, RunOptions};
use bench_cli::scenes::{channel_grid, gen_scenes, parse_scene_file, SceneDefaults, SceneSet};
use bench_cli::BenchError;
use proptest::prelude::*;
use sw_sim::MachineConfig;

fn mg3m(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mg3m")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn scene_sets_enumerate_the_sweeps() {
    let d = SceneDefaults::default();
    let count = |set| gen_scenes(set, &d).unwrap().len();
    assert_eq!(count(SceneSet::ChannelsSmall), 16);
    assert_eq!(count(SceneSet::ChannelsMedium), 16);
    assert_eq!(count(SceneSet::ChannelsBig), 16);
    assert_eq!(count(SceneSet::Batch), 30);
    assert_eq!(count(SceneSet::Filter), 50);
    assert_eq!(count(SceneSet::Padstride), 40);

    let small = gen_scenes(SceneSet::ChannelsSmall, &d).unwrap();
    let pairs: Vec<_> = small.iter().map(|s| (s.shape.ic, s.shape.oc)).collect();
    for ic in [16, 32, 48, 64] {
        for oc in [16, 32, 48, 64] {
            assert!(pairs.contains(&(ic, oc)));
        }
    }
    assert!(small.iter().all(|s| s.shape.b == 128 && s.shape.in_h == 16 && s.shape.flt_h == 3));

    let ps = gen_scenes(SceneSet::Padstride, &d).unwrap();
    let configs: Vec<_> = ps.iter().map(|s| (s.shape.pad_h, s.shape.std_h)).collect();
    for c in [(0, 1), (1, 1), (0, 2), (1, 2)] {
        assert_eq!(configs.iter().filter(|&&x| x == c).count(), 10);
    }
    assert_eq!(channel_grid().len(), 46);
    assert!(matches!("nope".parse::<SceneSet>(), Err(BenchError::UnknownSet(_))));
    assert!(gen_scenes(SceneSet::Custom, &d).is_err());
}

#[test]
fn scene_files_take_one_or_many() {
    let one = parse_scene_file(r#"{"b":4,"ic":8,"oc":8,"in_h":5,"in_w":5,"flt_h":3,"flt_w":3}"#).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!((one[0].shape.out_h, one[0].shape.std_w), (3, 1));
    let many = parse_scene_file(
        r#"[{"b":4,"ic":8,"oc":8,"in_h":5,"in_w":5,"flt_h":3,"flt_w":3},
            {"b":8,"ic":4,"oc":4,"in_h":7,"in_w":7,"flt_h":3,"flt_w":3,"pad_h":1,"pad_w":1,"std_h":2,"std_w":2}]"#,
    )
    .unwrap();
    assert_eq!(many[1].index, 1);
    assert_eq!(many[1].shape.out_h, 4);
    assert!(parse_scene_file("[]").is_err());
    assert!(parse_scene_file(r#"{"b":0,"ic":8,"oc":8,"in_h":5,"in_w":5,"flt_h":3,"flt_w":3}"#).is_err());
    assert!(parse_scene_file("{").is_err());
}

#[test]
fn verify_passes_and_reports_csv() {
    let (code, out, err) = mg3m(&["verify", "--set", "padstride", "--batch", "4", "--in-size", "6", "--index", "3"]);
    assert_eq!(code, 0, "{err}");
    let rows: Vec<BenchRecord> = read_csv(&out).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].verified && rows[0].max_rel_err.unwrap() <= 1e-5);
    assert!(out.starts_with("# batch=4 in_size=6 filter=3"));
}

#[test]
fn usage_and_config_errors_exit_two() {
    assert_eq!(mg3m(&["bench", "--set", "bogus"]).0, 2);
    assert_eq!(mg3m(&["bench", "--frobnicate"]).0, 2);
    assert_eq!(mg3m(&["grainmap", "--machine", "/nonexistent.json"]).0, 2);
    let dir = std::env::temp_dir().join(format!("mg3m-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("machine.json");
    std::fs::write(&bad, r#"{"ldm_bytes": 0}"#).unwrap();
    let (code, _, err) = mg3m(&["bench", "--ic", "8", "--oc", "8", "--machine", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("machine config"), "{err}");
    let (code, _, _) = mg3m(&["bench", "--ic", "8", "--oc", "8", "--mode", "model", "--verify"]);
    assert_eq!(code, 2);
}

#[test]
fn infeasible_scenes_are_listed_and_fail_the_run() {
    let dir = std::env::temp_dir().join(format!("mg3m-pinned-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let pinned = dir.join("overrides.json");
    std::fs::write(&pinned, r#"{"out_len": 999}"#).unwrap();
    let (code, out, err) = mg3m(&[
        "verify", "--ic", "8", "--oc", "8", "--batch", "4", "--in-size", "4", "--overrides", pinned.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("custom #0"), "{err}");
    assert!(read_csv::<BenchRecord>(&out).unwrap().is_empty());
}

#[test]
fn bench_records_are_self_consistent_and_reproducible() {
    let args = ["bench", "--set", "channels-small", "--batch", "8", "--in-size", "5", "--seed", "7", "--verify"];
    let (code, first, _) = mg3m(&args);
    assert_eq!(code, 0);
    let (_, second, _) = mg3m(&[&args[..], &["--jobs", "3"]].concat());
    assert_eq!(first, second);
    let rows: Vec<BenchRecord> = read_csv(&first).unwrap();
    assert_eq!(rows.len(), 16);
    for r in &rows {
        assert!(r.efficiency > 0.0 && r.efficiency <= 1.0);
        assert!((r.recomputed_efficiency() - r.efficiency).abs() <= 1e-12 * r.efficiency);
        assert!(r.verified);
        assert!(r.dma_bytes_flt.unwrap() > 0 && r.dma_bytes_in.unwrap() > 0);
    }

    let (_, model, _) = mg3m(&["bench", "--set", "channels-big", "--mode", "model"]);
    let rows: Vec<BenchRecord> = read_csv(&model).unwrap();
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r.mode == Mode::Model && r.dma_bytes_in.is_none() && !r.verified));
}

#[test]
fn grainmap_and_compare_outputs() {
    let (code, out, _) = mg3m(&["grainmap", "--batch", "64", "--jobs", "2"]);
    assert_eq!(code, 0);
    let rows: Vec<GrainRecord> = read_csv(&out).unwrap();
    assert_eq!(rows.len(), 46);
    assert!(out.lines().nth(1).unwrap() == "B,IC,OC,grain");

    let dir = std::env::temp_dir().join(format!("mg3m-cmp-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let summary = dir.join("summary.csv");
    let (code, out, err) = mg3m(&[
        "compare-simple", "--set", "channels-small", "--batch", "64", "--summary", summary.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(err.contains("B=64"));
    assert_eq!(out.lines().filter(|l| !l.starts_with('#')).count(), 17);
    let text = std::fs::read_to_string(&summary).unwrap();
    assert!(text.contains("B,scenes,pinned_mean,auto_mean,relative_gap"));
}

#[test]
fn plan_dump_pins_a_rerun() {
    let dir = std::env::temp_dir().join(format!("mg3m-plan-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let (code, plan, _) = mg3m(&["plan", "--ic", "16", "--oc", "16", "--batch", "8", "--in-size", "6", "--pin-grain", "1x8"]);
    assert_eq!(code, 0);
    let path = dir.join("plan.json");
    std::fs::write(&path, &plan).unwrap();
    let (code, out, _) = mg3m(&[
        "bench", "--ic", "16", "--oc", "16", "--batch", "8", "--in-size", "6", "--verify", "--overrides", path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let rows: Vec<BenchRecord> = read_csv(&out).unwrap();
    let v: serde_json::Value = serde_json::from_str(&plan).unwrap();
    assert_eq!(rows[0].grain, "1x8");
    assert_eq!(rows[0].out_len, v["out_len"].as_u64().unwrap() as usize);
    assert_eq!(rows[0].db_variant, v["db_variant"].as_str().unwrap());
}

#[test]
fn kernel_table_lists_every_tile() {
    let (code, out, _) = mg3m(&["kernel-table"]);
    assert_eq!(code, 0);
    assert!(out.lines().any(|l| l.starts_with("4x16/local,16,8,25,17")), "{out}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn records_survive_a_csv_roundtrip(b in 1usize..6, c in 1usize..9, size in 3usize..6, seed in 0u64..100) {
        let scenes = parse_scene_file(&format!(
            r#"{{"b":{b},"ic":{c},"oc":{c},"in_h":{size},"in_w":{size},"flt_h":3,"flt_w":3}}"#
        )).unwrap();
        let opts = RunOptions { seed, verify: true, ..RunOptions::new(MachineConfig::default()) };
        let rec = bench_cli::run::run_scene(&scenes[0], &opts).unwrap();
        prop_assert!(rec.verified);
        let mut buf = Vec::new();
        bench_cli::run::write_csv(&mut buf, Some("# x"), std::slice::from_ref(&rec)).unwrap();
        let back: Vec<BenchRecord> = read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(&back[0], &rec);
    }
}
