use std::path::Path;
use std::process::Command;

use simulst_latency::report::parse_evaluate_csv;
use simulst_latency::{
    average_lagging, cutoff_index, oracle_delays, read_log, DelayMode, DelaySequence,
    MetricVariant, ReadOptions,
};

const MISSISSIPPI: &str = r#"{"index":0,"prediction":"ein Mississippi zwei Mississippi drei Mississippi","delays":[1000,1000,2000,2000,3000,3000],"elapsed":[1500,2000,3500,4000,5500,6000],"source_length":3000,"segment_ms":1000,"reference":"one Mississippi two Mississippi three Mississippi"}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_simulst-latency"))
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().expect("binary runs");
    (
        out.status.code().expect("exited normally"),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn evaluate_mississippi_log() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "m.log", MISSISSIPPI);
    let (code, out, _) = run(&["evaluate", "--input", &input, "--modes", "CU,CA_STAR"]);
    assert_eq!(code, 0);
    let parsed = parse_evaluate_csv(out.as_bytes()).unwrap();
    let report = &parsed.reports[0];
    assert_eq!(report.modes[&DelayMode::Cu].al_ms, Some(800.0));
    assert_eq!(report.modes[&DelayMode::CaStar].al_ms, Some(1500.0));
    assert_eq!(report.modes[&DelayMode::CaStar].cutoff, Some(4));
    assert!(!report.modes.contains_key(&DelayMode::Ca));
    assert_eq!(parsed.corpus[&DelayMode::Cu].al_ms, Some(800.0));
    assert_eq!(parsed.skipped, Some(0));
}

#[test]
fn evaluate_empty_log_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "empty.log", "");
    let (code, _, err) = run(&["evaluate", "--input", &input]);
    assert_eq!(code, 2);
    assert!(err.contains("no scorable instances"), "{err}");
}

#[test]
fn evaluate_missing_file_and_garbage_never_crash() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.log");
    assert_eq!(
        run(&["evaluate", "--input", missing.to_str().unwrap()]).0,
        2
    );
    let garbage = write(dir.path(), "g.log", "\u{0}\u{1}binary junk\n[1,2,3]\n");
    assert_eq!(run(&["evaluate", "--input", &garbage]).0, 2);
    assert_eq!(run(&["evaluate", "--input", &garbage, "--lenient"]).0, 2);
    assert_eq!(run(&["evaluate"]).0, 1);
    assert_eq!(
        run(&["evaluate", "--input", &garbage, "--metrics", "ATD"]).0,
        1
    );
}

#[test]
fn evaluate_records_format() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "m.log", MISSISSIPPI);
    let (code, out, _) = run(&["evaluate", "--input", &input, "--format", "records"]);
    assert_eq!(code, 0);
    let lines: Vec<serde_json::Value> = out
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["modes"]["CA"]["cutoff"], 3);
    assert_eq!(lines[1]["corpus"]["modes"]["CU"]["al_ms"], 800.0);
}

#[test]
fn compare_table_mirrors_mode_rows() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "m.log", MISSISSIPPI);
    let dump = dir.path().join("delays.csv");
    let (code, out, _) = run(&[
        "compare",
        "--input",
        &input,
        "--dump-delays",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(
        out,
        "mode,AL_ms,LAAL_ms,instances\nCU,800.0,800.0,1\nCA,1833.3,1833.3,1\nCA_STAR,1500.0,1500.0,1\n"
    );
    let dump = std::fs::read_to_string(dump).unwrap();
    assert!(dump.starts_with("instance_id,token,cu_ms,ca_ms,ca_star_ms,inference_ms\n"));
    assert!(dump.contains("0,6,3000.000,6000.000,4000.000,1000.000"));
}

#[test]
fn compare_zero_computation_rows_match() {
    let dir = tempfile::tempdir().unwrap();
    let log = r#"{"index":0,"delays":[1000,1000,2000,3000],"elapsed":[1000,1000,2000,3000],"source_length":3000,"segment_ms":1000,"reference":"a b c d e"}"#;
    let input = write(dir.path(), "z.log", log);
    let (code, out, _) = run(&["compare", "--input", &input]);
    assert_eq!(code, 0);
    let rows: Vec<&str> = out
        .lines()
        .skip(1)
        .map(|l| l.split_once(',').unwrap().1)
        .collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| *r == rows[0]), "{out}");
}

#[test]
fn simulate_mississippi_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("sim.log");
    let (code, _, _) = run(&[
        "simulate",
        "--output",
        log.to_str().unwrap(),
        "--policy",
        "1,2",
        "--segment-ms",
        "1000",
        "--segments",
        "3",
        "--compute",
        "constant:500",
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&log).unwrap();
    assert!(text.contains("\"delays\":[1000.000,1000.000,2000.000,2000.000,3000.000,3000.000]"));
    assert!(text.contains("\"elapsed\":[1500.000,2000.000,3500.000,4000.000,5500.000,6000.000]"));
    let sidecar = std::fs::read_to_string(format!("{}.emission.jsonl", log.display())).unwrap();
    assert_eq!(
        sidecar.trim(),
        r#"{"index":0,"emission_wall":[1500.000,2000.000,2500.000,3000.000,3500.000,4000.000]}"#
    );
}

fn sidecar_times(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["emission_wall"]
                .as_array()
                .unwrap()
                .iter()
                .map(|x| x.as_f64().unwrap())
                .collect()
        })
        .collect()
}

#[test]
fn simulated_ca_star_matches_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("sim.log");
    let dump = dir.path().join("dump.csv");
    for compute in ["constant:30", "constant:0", "uniform:0,400"] {
        let (code, _, err) = run(&[
            "simulate",
            "--output",
            log.to_str().unwrap(),
            "--policy",
            "4,3",
            "--segment-ms",
            "250",
            "--segments",
            "100",
            "--compute",
            compute,
            "--instances",
            "3",
            "--tail-tokens",
            "2",
        ]);
        assert_eq!(code, 0, "{err}");
        let truth = sidecar_times(&dir.path().join("sim.log.emission.jsonl"));
        let (code, _, _) = run(&[
            "compare",
            "--input",
            log.to_str().unwrap(),
            "--dump-delays",
            dump.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let mut csv = csv::Reader::from_path(&dump).unwrap();
        for row in csv.records() {
            let row = row.unwrap();
            let instance: usize = row[0].parse().unwrap();
            let token: usize = row[1].parse().unwrap();
            let ca_star: f64 = row[4].parse().unwrap();
            let cu: f64 = row[2].parse().unwrap();
            // Both sides went through 3-decimal rounding.
            assert!(
                (ca_star - truth[instance][token - 1]).abs() <= 2e-3,
                "{compute} {instance}/{token}"
            );
            if compute == "constant:0" {
                assert_eq!(ca_star, cu);
            }
        }
    }
}

#[test]
fn compare_on_simulated_corpus_matches_oracle_al() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("corpus.log");
    let (code, _, _) = run(&[
        "simulate",
        "--output",
        log.to_str().unwrap(),
        "--policy",
        "3,2",
        "--segment-ms",
        "300",
        "--segments",
        "20",
        "--compute",
        "uniform:50,450",
        "--instances",
        "1000",
        "--seed",
        "9",
    ]);
    assert_eq!(code, 0);
    let truth = sidecar_times(&dir.path().join("corpus.log.emission.jsonl"));
    let traces = read_log(
        std::io::BufReader::new(std::fs::File::open(&log).unwrap()),
        ReadOptions::default(),
    )
    .unwrap()
    .traces;

    let mut al_sum = 0.0;
    for (t, times) in traces.iter().zip(&truth) {
        let seq = DelaySequence {
            mode: DelayMode::CaStar,
            values_ms: times.clone(),
            inference_ms: None,
        };
        let cutoff = cutoff_index(&seq, t.total_ms()).unwrap();
        let oracle = oracle_delays(
            t.total_ms(),
            t.reference_length,
            seq.len(),
            MetricVariant::Al,
        )
        .unwrap();
        al_sum += average_lagging(&seq, &oracle, cutoff);
    }
    let oracle_al = al_sum / traces.len() as f64;

    let (code, out, _) = run(&[
        "compare",
        "--input",
        log.to_str().unwrap(),
        "--format",
        "records",
        "--workers",
        "4",
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    let ca_star_al = v["modes"]["CA_STAR"]["al_ms"].as_f64().unwrap();
    assert!(
        (ca_star_al - oracle_al).abs() < 1e-2,
        "{ca_star_al} vs {oracle_al}"
    );
    assert_eq!(v["modes"]["CA_STAR"]["instances"], 1000);
}

#[test]
fn deterministic_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "8"].iter().enumerate() {
        let log = dir.path().join(format!("s{i}.log"));
        let report = dir.path().join(format!("r{i}.csv"));
        let args = [
            "simulate",
            "--output",
            log.to_str().unwrap(),
            "--compute",
            "uniform:0,120",
            "--seed",
            "77",
            "--instances",
            "20",
        ];
        assert_eq!(run(&args).0, 0);
        let eval = [
            "evaluate",
            "--input",
            log.to_str().unwrap(),
            "--output",
            report.to_str().unwrap(),
            "--deterministic",
            "--workers",
            workers,
        ];
        assert_eq!(run(&eval).0, 0);
        outputs.push((
            std::fs::read(&log).unwrap(),
            std::fs::read(&report).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn scale_study_single_repeat_matches_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "m.log", MISSISSIPPI);
    let (code, eval, _) = run(&["evaluate", "--input", &input]);
    assert_eq!(code, 0);
    let corpus = parse_evaluate_csv(eval.as_bytes()).unwrap().corpus;

    let (code, out, _) = run(&["scale-study", "--input", &input, "--repeats", "1"]);
    assert_eq!(code, 0);
    let mut csv = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(out.as_bytes());
    let mut rows = 0;
    for row in csv.records() {
        let row = row.unwrap();
        let mode: DelayMode = row[1].parse().unwrap();
        assert_eq!(row[2].parse::<f64>().ok(), corpus[&mode].al_ms);
        assert_eq!(row[3].parse::<f64>().ok(), corpus[&mode].laal_ms);
        rows += 1;
    }
    assert_eq!(rows, 3);
}

#[test]
fn scale_study_on_mississippi_base() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "m.log", MISSISSIPPI);
    let (code, out, _) = run(&["scale-study", "--input", &input, "--repeats", "1,2,3,4"]);
    assert_eq!(code, 0);
    let mut csv = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(out.as_bytes());
    let mut last = std::collections::BTreeMap::<String, Vec<f64>>::new();
    for row in csv.records() {
        let row = row.unwrap();
        last.entry(row[1].to_string())
            .or_default()
            .push(row[4].parse().unwrap());
    }
    // CA last token: r*3000 + r*3000; CA*: r*3000 + 1000.
    assert_eq!(last["CA"], vec![6000.0, 12000.0, 18000.0, 24000.0]);
    assert_eq!(last["CA_STAR"], vec![4000.0, 7000.0, 10000.0, 13000.0]);
    assert!(out.contains("CA_last_grows_faster_than_CA_STAR=true"));
    assert!(out.contains("CA_laal_strictly_increasing=true"));

    assert_eq!(
        run(&["scale-study", "--input", &input, "--repeats", "2,2"]).0,
        1
    );
    assert_eq!(
        run(&["scale-study", "--input", &input, "--repeats", "0,1"]).0,
        1
    );
}

#[test]
fn simulate_rejects_bad_policy() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("x.log");
    let out = log.to_str().unwrap();
    assert_eq!(
        run(&[
            "simulate",
            "--output",
            out,
            "--policy",
            "9,1",
            "--segments",
            "4"
        ])
        .0,
        1
    );
    assert_eq!(run(&["simulate", "--output", out, "--policy", "0,1"]).0, 1);
    assert_eq!(
        run(&["simulate", "--output", out, "--compute", "constant:-5"]).0,
        1
    );
    assert_eq!(
        run(&["simulate", "--output", out, "--compute", "uniform:9,1"]).0,
        1
    );
    assert_eq!(run(&["simulate", "--output", out, "--policy", "k"]).0, 1);
}
