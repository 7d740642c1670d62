//! End-to-end tests of the binary: exit codes, file outputs, determinism,
//! and the bundled-fixture sweep directions.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn spanopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spanopt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spanopt-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn tiny_model(dir: &Path) -> String {
    write(
        dir,
        "model.json",
        r#"{"num_layers": 6, "hidden_dim": 256, "ffn_dim": 1024, "seq_len": 256}"#,
    )
}

fn tiny_topo(dir: &Path) -> String {
    write(
        dir,
        "topo.json",
        r#"{
            "buildings": [{"gpu_count": 2, "zones": 1}, {"gpu_count": 2, "zones": 1}],
            "link_classes": {
                "intra_server":   {"bandwidth_gbps": 3600, "latency_us": 1},
                "intra_zone":     {"bandwidth_gbps": 400, "latency_us": 20},
                "cross_zone":     {"bandwidth_gbps": 400, "latency_us": 30},
                "cross_building": {"bandwidth_gbps": 400, "latency_us": 50, "oversubscription": 4.0}
            },
            "gpu": {"hbm_bytes": 2000000000000, "effective_flops": 989000000000000.0, "gpus_per_server": 2}
        }"#,
    )
}

#[test]
fn eval_bundled_fixtures_succeeds() {
    let dir = tmp_dir("eval");
    let out = spanopt(&[
        "eval",
        "--model",
        "moe40b",
        "--topo",
        "two-building-128",
        "--config",
        "config-moe40b",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["t_dp_out_s"].as_f64().unwrap() > 0.0);
    assert!(metrics["t_pp_out_s"].as_f64().unwrap() > 0.0);
    assert!(metrics["assumptions"]["chunk_spread_cap"].as_f64().is_some());
    let timeline = std::fs::read_to_string(dir.join("timeline.csv")).unwrap();
    assert!(timeline.lines().count() > 10);
}

#[test]
fn missing_field_names_the_path_and_exits_1() {
    let dir = tmp_dir("badmodel");
    let model = write(dir.as_path(), "model.json", r#"{"num_layers": 6, "seq_len": 256}"#);
    let topo = tiny_topo(&dir);
    let out = spanopt(&["volumes", "--model", &model, "--topo", &topo, "--config", "config-moe40b"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("hidden_dim"), "stderr should name the field: {err}");
}

#[test]
fn invalid_config_exits_2_with_violations() {
    let dir = tmp_dir("badcfg");
    let model = tiny_model(&dir);
    let topo = tiny_topo(&dir);
    // 2 microbatches for pp = 4 stages.
    let config = write(
        &dir,
        "config.json",
        r#"{
            "batch": {"global_batch_size": 2, "microbatch_size": 1},
            "parallelism": {
                "tp": 1, "cp": 1, "ep": 1, "pp": 4, "dp": 1,
                "placement": "pp_out", "schedule": "1f1b", "dp_scheme": "fsdp",
                "chunk_partition": [2, 2, 1, 1]
            }
        }"#,
    );
    let out = spanopt(&["eval", "--model", &model, "--topo", &topo, "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("microbatches < pipeline stages"),
        "stderr should list the violation: {err}"
    );
}

#[test]
fn explore_is_byte_identical_for_a_seed() {
    let dir = tmp_dir("seed");
    let model = tiny_model(&dir);
    let topo = tiny_topo(&dir);
    let mut reports = Vec::new();
    for run in 0..2 {
        let out_dir = dir.join(format!("run{run}"));
        let out = spanopt(&[
            "explore",
            "--model",
            &model,
            "--topo",
            &topo,
            "--gbs",
            "8",
            "--seed",
            "7",
            "--top-k",
            "4",
            "--perturbations",
            "4",
            "--chunk-configs",
            "4",
            "--exploration-partitions",
            "2",
            "--tp",
            "1",
            "--max-mbs",
            "4",
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(std::fs::read(out_dir.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1], "same seed must reproduce report.json byte for byte");
}

#[test]
fn explore_report_best_config_round_trips_through_eval() {
    let dir = tmp_dir("roundtrip");
    let model = tiny_model(&dir);
    let topo = tiny_topo(&dir);
    let out = spanopt(&[
        "explore",
        "--model",
        &model,
        "--topo",
        &topo,
        "--gbs",
        "8",
        "--seed",
        "3",
        "--top-k",
        "2",
        "--perturbations",
        "2",
        "--chunk-configs",
        "2",
        "--exploration-partitions",
        "2",
        "--tp",
        "1",
        "--max-mbs",
        "4",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let best = &report["ranked"][0];
    let config = serde_json::json!({
        "batch": best["batch"],
        "parallelism": best["parallelism"],
    });
    let config_path = write(&dir, "best.json", &serde_json::to_string_pretty(&config).unwrap());
    let out = spanopt(&[
        "eval",
        "--model",
        &model,
        "--topo",
        &topo,
        "--config",
        &config_path,
        "--out-dir",
        dir.join("eval").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // The re-ingested config evaluates to the reported iteration time.
    let metrics: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("eval/metrics.json")).unwrap(),
    )
    .unwrap();
    let reported = best["iteration_time_s"].as_f64().unwrap();
    let placement = best["placement"].as_str().unwrap();
    let key = if placement == "dp_out" { "t_dp_out_s" } else { "t_pp_out_s" };
    let evaluated = metrics[key].as_f64().unwrap();
    assert!(
        (reported - evaluated).abs() <= 1e-9 * reported.max(1.0),
        "reported {reported} vs evaluated {evaluated}"
    );
}

fn sweep_rows(csv: &str, placement: &str, schedule: &str, scheme: &str) -> Vec<(f64, f64)> {
    csv.lines()
        .skip(1)
        .filter_map(|line| {
            let parts: Vec<&str> = line.split(',').collect();
            if parts[2] == placement && parts[3] == schedule && parts[4] == scheme {
                Some((parts[1].parse().unwrap(), parts[5].parse().unwrap()))
            } else {
                None
            }
        })
        .collect()
}

#[test]
fn experts_sweep_grows_dp_out_faster() {
    let dir = tmp_dir("experts");
    let out = spanopt(&[
        "sweep",
        "--model",
        "moe40b",
        "--topo",
        "two-building-128",
        "--config",
        "config-moe40b",
        "--axis",
        "experts",
        "--values",
        "16,32,64,128",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let dp = sweep_rows(&csv, "dp_out", "dorapp", "fsdp");
    let pp = sweep_rows(&csv, "pp_out", "dorapp", "fsdp");
    assert_eq!(dp.len(), 4);
    let dp_growth = dp.last().unwrap().1 - dp[0].1;
    let pp_growth = pp.last().unwrap().1 - pp[0].1;
    assert!(
        dp_growth > pp_growth,
        "DP-out iteration time must grow faster with experts: dp {dp_growth} vs pp {pp_growth}"
    );
}

#[test]
fn oversub_sweep_crosses_to_pp_out() {
    let dir = tmp_dir("oversub");
    let out = spanopt(&[
        "sweep",
        "--model",
        "moe40b",
        "--topo",
        "two-building-128",
        "--config",
        "config-moe40b",
        "--axis",
        "oversub",
        "--values",
        "1.33,4,8,16",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let dp = sweep_rows(&csv, "dp_out", "dorapp", "fsdp");
    let pp = sweep_rows(&csv, "pp_out", "dorapp", "fsdp");
    for ((v, t_dp), (_, t_pp)) in dp.iter().zip(pp.iter()) {
        if *v > 4.0 {
            assert!(t_pp < t_dp, "PP-out must be faster beyond 1:4 (at 1:{v})");
        }
    }
}

#[test]
fn latency_sweep_with_loss_hits_pp_out_harder() {
    let dir = tmp_dir("latloss");
    // Bundled dense topology with a lossy cross-building tier.
    let mut topo: serde_json::Value =
        serde_json::from_str(spanopt_fixture("two-building-64")).unwrap();
    topo["link_classes"]["cross_building"]["loss_rate"] = 0.0002.into();
    topo["link_classes"]["cross_building"]["oversubscription"] = 8.0.into();
    let topo_path = write(&dir, "topo.json", &topo.to_string());
    let out = spanopt(&[
        "sweep",
        "--model",
        "dense17b",
        "--topo",
        &topo_path,
        "--config",
        "config-dense17b",
        "--assumptions-file",
        "assumptions-recompute",
        "--axis",
        "latency-us",
        "--values",
        "50,1000",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let dp = sweep_rows(&csv, "dp_out", "dorapp", "fsdp");
    let pp = sweep_rows(&csv, "pp_out", "dorapp", "fsdp");
    let dp_inflation = dp[1].1 / dp[0].1;
    let pp_inflation = pp[1].1 / pp[0].1;
    assert!(
        pp_inflation > dp_inflation,
        "PP-out must be more latency-sensitive under loss: pp {pp_inflation} vs dp {dp_inflation}"
    );
}

fn spanopt_fixture(name: &str) -> &'static str {
    spanopt_core::fixtures::bundled(name).unwrap()
}

#[test]
fn dump_schedule_emits_dag_and_timeline() {
    let dir = tmp_dir("dump");
    let out = spanopt(&[
        "dump-schedule",
        "--model",
        "moe40b",
        "--topo",
        "two-building-128",
        "--config",
        "config-moe40b",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("schedule.json")).unwrap()).unwrap();
    assert!(dag["kernels"].as_array().unwrap().len() > 100);
    assert!(dag["parents"].as_array().is_some());
    let kernel = &dag["kernels"][0];
    assert!(kernel["dur_dp_out"].is_number());
    assert!(kernel["dur_pp_out"].is_number());
}

#[test]
fn sweep_without_values_exits_1() {
    let out = spanopt(&[
        "sweep",
        "--model",
        "moe40b",
        "--topo",
        "two-building-128",
        "--config",
        "config-moe40b",
        "--axis",
        "oversub",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn distance_flag_scales_latency() {
    let dir = tmp_dir("distance");
    for (tag, km) in [("near", "1"), ("far", "400")] {
        let out = spanopt(&[
            "eval",
            "--model",
            "moe40b",
            "--topo",
            "two-building-128",
            "--config",
            "config-moe40b",
            "--distance-km",
            km,
            "--out-dir",
            dir.join(tag).to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |tag: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(dir.join(tag).join("metrics.json")).unwrap())
            .unwrap()
    };
    // 400 km = 2000 us one way at 5 us/km; both placements slow down.
    let near = read("near");
    let far = read("far");
    assert!(
        far["t_pp_out_s"].as_f64().unwrap() > near["t_pp_out_s"].as_f64().unwrap(),
        "longer distance must slow PP-out"
    );
    assert!(
        far["t_dp_out_s"].as_f64().unwrap() > near["t_dp_out_s"].as_f64().unwrap(),
        "longer distance must slow DP-out"
    );
}
