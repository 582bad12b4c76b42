use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use injflow::expansive::ExpansiveLayer;
use injflow::experiments::gap_curve_network;
use injflow::flows::{CouplingLayer, FlowBlock, FlowLayer, Subnet};
use injflow::InjectiveNetwork;
use nalgebra::{DMatrix, DVector};
use serde_json::Value;

fn injflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_injflow")).current_dir(dir).args(args).output().expect("binary runs")
}

fn error_record(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn out_defaults_to_local_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = injflow(dir.path(), &["run", "projection-bench", "--n", "2", "--trials", "20"]);
    assert!(out.status.success());
    let s = summary(&dir.path().join("out"));
    assert_eq!(s["preset"], "projection-bench");
    assert_eq!(s["seed"], 0);
    assert!(s["wall_time"].as_f64().unwrap() >= 0.0);
    assert!(dir.path().join("out/trials.csv").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = injflow(dir.path(), &["run", "no-such-preset"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"]["kind"], "usage");

    let out = injflow(dir.path(), &["run", "gap-visualization", "--trials", "3"]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(dir.path().join("bad.json"), "{\n  \"n\": 3,\n  \"trials\": oops\n}\n").unwrap();
    let out = injflow(dir.path(), &["run", "projection-bench", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert_eq!(rec["error"]["line"], 3);
    assert!(rec["error"]["column"].as_u64().unwrap() > 0);

    fs::write(dir.path().join("bad.toml"), "n = 3\ntrials = [\n").unwrap();
    let out = injflow(dir.path(), &["run", "projection-bench", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_record(&out)["error"]["line"].as_u64().is_some());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bench.toml"), "seed = 4\nn = 1\ntrials = 7\n").unwrap();
    let out = injflow(dir.path(), &["run", "projection-bench", "--config", "bench.toml", "--trials", "5"]);
    assert!(out.status.success());
    let s = summary(&dir.path().join("out"));
    assert_eq!(s["seed"], 4);
    assert_eq!(s["metrics"]["n"], 1);
    assert_eq!(s["metrics"]["trials"], 5);
}

#[test]
fn json_and_csv_carry_the_same_numbers() {
    let dir = tempfile::tempdir().unwrap();
    for (fmt, sub) in [("csv", "c"), ("json", "j")] {
        let out = injflow(dir.path(), &["run", "projection-bench", "--n", "2", "--trials", "30", "--seed", "3", "--format", fmt, "--out", sub]);
        assert!(out.status.success());
    }
    let csv = fs::read_to_string(dir.path().join("c/trials.csv")).unwrap();
    let json: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("j/trials.json")).unwrap()).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let columns: Vec<&str> = json["columns"].as_array().unwrap().iter().map(|c| c.as_str().unwrap()).collect();
    assert_eq!(header, columns);
    let rows = json["rows"].as_array().unwrap();
    let csv_rows: Vec<&str> = lines.collect();
    assert_eq!(csv_rows.len(), rows.len());
    for (line, row) in csv_rows.iter().zip(rows) {
        for (field, cell) in line.split(',').zip(row.as_array().unwrap()) {
            assert_eq!(field.parse::<f64>().unwrap().to_bits(), cell.as_f64().unwrap().to_bits());
        }
    }
}

#[test]
fn quick_presets_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["a", "b"] {
        assert!(injflow(dir.path(), &["run", "gap-visualization", "--seed", "5", "--out", sub]).status.success());
    }
    for entry in fs::read_dir(dir.path().join("a")).unwrap() {
        let name = entry.unwrap().file_name();
        if name == "summary.json" {
            continue;
        }
        assert_eq!(fs::read(dir.path().join("a").join(&name)).unwrap(), fs::read(dir.path().join("b").join(&name)).unwrap());
    }
    let (mut a, mut b) = (summary(&dir.path().join("a")), summary(&dir.path().join("b")));
    a.as_object_mut().unwrap().remove("wall_time");
    b.as_object_mut().unwrap().remove("wall_time");
    assert_eq!(a, b);
    assert_eq!(a["metrics"]["intervals_monotone"], true);
    assert_eq!(a["metrics"]["final_contains_zero"], true);
}

#[test]
fn project_writes_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    gap_curve_network(1.0).unwrap().save(&dir.path().join("net.json")).unwrap();
    fs::write(dir.path().join("q.csv"), "y0,y1\n0.1,0.5\n-2.0,0.0\n").unwrap();
    let out = injflow(dir.path(), &["project", "--checkpoint", "net.json", "--queries", "q.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/projection.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "query_0,query_1,preimage_0,rangepoint_0,rangepoint_1,residual,tie_flag"
    );
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn gap_reads_samples_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let f = gap_curve_network(1.0).unwrap();
    gap_curve_network(0.5).unwrap().save(&dir.path().join("g.json")).unwrap();
    let mut k = String::from("x0\n");
    let mut fk = String::from("y0,y1\n");
    for i in 0..41 {
        let x = -1.0 + 2.0 * f64::from(i) / 40.0;
        k.push_str(&format!("{x:.17e}\n"));
        let y = f.forward(&[x]).unwrap();
        fk.push_str(&format!("{:.17e},{:.17e}\n", y[0], y[1]));
    }
    fs::write(dir.path().join("k.csv"), k).unwrap();
    fs::write(dir.path().join("f.csv"), fk).unwrap();
    let out = injflow(dir.path(), &["gap", "--checkpoint", "g.json", "--k-samples", "k.csv", "--f-samples", "f.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/gap.json")).unwrap()).unwrap();
    let (lo, up) = (v["lower"].as_f64().unwrap(), v["upper"].as_f64().unwrap());
    assert!(lo <= up && up > 0.0);
    assert!(v["w2_exact"].as_f64().is_some());
    assert_eq!(v["bound_check"]["passed"], true);
}

#[test]
fn numeric_failure_exits_1_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    let t = Subnet::affine(DMatrix::from_element(1, 1, 1e300), DVector::zeros(1));
    let layer = CouplingLayer::new(2, 1, vec![0, 1], Subnet::zeros(1, 1), t).unwrap();
    let block = FlowBlock::new(2, vec![FlowLayer::AffineCoupling(layer)]).unwrap();
    let r = ExpansiveLayer::zero_pad(1, 2).unwrap();
    let net = InjectiveNetwork::new(FlowBlock::identity(1), vec![(r, block)]).unwrap();
    net.save(&dir.path().join("net.json")).unwrap();
    fs::write(dir.path().join("q.csv"), "y0,y1\n1.0,1e10\n").unwrap();
    let out = injflow(dir.path(), &["project", "--checkpoint", "net.json", "--queries", "q.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let rec = error_record(&out);
    assert_eq!(rec["error"]["kind"], "numeric");
    assert_eq!(rec["error"]["stage"], 2);
}
