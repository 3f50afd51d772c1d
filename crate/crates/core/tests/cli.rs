use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use attrex::annotate::{render_pairs, PromptTemplate, ReplayClient};
use attrex::corpus::Pair;
use attrex::crf::CrfModel;
use attrex::drc::DrcModel;
use attrex::encoder::{EncoderConfig, SpanEncoder, Template};
use attrex::schema::Schema;
use serde_json::Value;
use tempfile::TempDir;

fn attrex(dir: &Path, args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_attrex"))
        .args(args)
        .current_dir(dir)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut input = child.stdin.take().unwrap();
    input.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(input);
    child.wait_with_output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn synth_split(dir: &Path) {
    let o = attrex(
        dir,
        &["synth", "--n", "400", "--out", "all.jsonl", "--split-dir", "sp"],
        None,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn missing_corpus_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let o = attrex(dir.path(), &["train-crf", "--corpus", "nowhere.conll"], None);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("nowhere.conll"));
}

#[test]
fn bad_config_key_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = attrex(dir.path(), &["--set", "crf.epochz=3", "synth", "--n", "5"], None);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    fs::write(dir.path().join("run.cfg"), "crf.epochs = zero\n").unwrap();
    let o = attrex(dir.path(), &["--config", "run.cfg", "synth", "--n", "5"], None);
    assert_eq!(code(&o), 2);
}

#[test]
fn seeded_training_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    synth_split(d);
    let args = |out: &'static str| {
        [
            "--seed",
            "5",
            "--set",
            "crf.epochs=2",
            "train-crf",
            "--corpus",
            "sp/train.jsonl",
            "--out",
            out,
        ]
    };
    let a = attrex(d, &args("a.json"), None);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert!(stderr(&a).contains("crf epoch 1/2"));
    assert!(stderr(&a).contains("crf epoch 2/2"));
    assert_eq!(code(&attrex(d, &args("b.json"), None)), 0);
    assert_eq!(fs::read(d.join("a.json")).unwrap(), fs::read(d.join("b.json")).unwrap());
}

#[test]
fn tag_eval_and_drc_pipeline() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    synth_split(d);
    for cmd in ["train-crf", "train-drc"] {
        let out = if cmd == "train-crf" { "crf.json" } else { "drc.json" };
        let o = attrex(d, &["-q", cmd, "--corpus", "sp/train.jsonl", "--out", out], None);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }

    let o = attrex(d, &["tag", "--crf", "crf.json"], Some(""));
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "");

    let queries = "a large red woman t-shirt\nstarbucks coffee\n";
    let plain = attrex(d, &["tag", "--crf", "crf.json", "--k", "3"], Some(queries));
    assert_eq!(code(&plain), 0, "{}", stderr(&plain));
    for line in stdout(&plain).lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let hyps = v["hypotheses"].as_array().unwrap();
        assert!(!hyps.is_empty() && hyps.len() <= 3);
        assert_eq!(v["spans"], hyps[0]["spans"]);
    }
    let one = attrex(d, &["tag", "--crf", "crf.json"], Some(queries));
    assert!(stdout(&one).lines().all(|l| !l.contains("hypotheses")));

    let with_drc = attrex(
        d,
        &[
            "tag",
            "--crf",
            "crf.json",
            "--drc",
            "on",
            "--drc-model",
            "drc.json",
            "--k",
            "2",
        ],
        Some(queries),
    );
    assert_eq!(code(&with_drc), 0, "{}", stderr(&with_drc));
    assert!(stderr(&with_drc).contains("drc scores"));
    assert!(stdout(&with_drc).lines().all(|l| l.contains("\"drc\"")));

    let off = attrex(
        d,
        &[
            "eval",
            "--gold",
            "sp/test.jsonl",
            "--crf",
            "crf.json",
            "--per-attribute",
            "--out",
            "off",
        ],
        None,
    );
    assert_eq!(code(&off), 0, "{}", stderr(&off));
    let table = stdout(&off);
    assert!(table.contains("Product Type") && table.contains("overall"));
    assert_eq!(fs::read_to_string(d.join("off.txt")).unwrap(), table);
    let report: Value = serde_json::from_str(&fs::read_to_string(d.join("off.json")).unwrap()).unwrap();
    assert_eq!(report["records"], 40);
    assert_eq!(report["config"]["drc"], false);

    let on = attrex(
        d,
        &[
            "eval",
            "--gold",
            "sp/test.jsonl",
            "--crf",
            "crf.json",
            "--drc",
            "on",
            "--drc-model",
            "drc.json",
            "--out",
            "on",
        ],
        None,
    );
    assert_eq!(code(&on), 0, "{}", stderr(&on));
    let on_report: Value = serde_json::from_str(&fs::read_to_string(d.join("on.json")).unwrap()).unwrap();
    assert_eq!(on_report["config"]["drc"], true);

    let soft = attrex(
        d,
        &[
            "eval",
            "--gold",
            "sp/test.jsonl",
            "--crf",
            "crf.json",
            "--decoder",
            "softmax",
        ],
        None,
    );
    assert_eq!(code(&soft), 0, "{}", stderr(&soft));
}

#[test]
fn eval_identity_and_hsr() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    synth_split(d);
    let o = attrex(
        d,
        &[
            "eval",
            "--gold",
            "sp/test.jsonl",
            "--predictions",
            "sp/test.jsonl",
            "--per-attribute",
            "--macro",
        ],
        None,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let overall = stdout(&o)
        .lines()
        .find(|l| l.starts_with("overall"))
        .unwrap()
        .to_string();
    assert!(overall.ends_with("1.0000    1.0000    1.0000"), "{overall}");

    let o = attrex(
        d,
        &["eval", "--gold", "sp/test.jsonl", "--predictions", "sp/dev.jsonl"],
        None,
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));

    fs::write(
        d.join("j.jsonl"),
        "{\"query\":\"nike shoes\",\"kind\":\"Brand\",\"value\":\"nike\",\"satisfied\":true}\n\
         {\"query\":\"red hat\",\"kind\":\"Color\",\"value\":\"red\",\"satisfied\":false}\n",
    )
    .unwrap();
    let o = attrex(d, &["hsr", "--judgments", "j.jsonl"], None);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("100.0") && stdout(&o).contains("50.0"));
    fs::write(d.join("bad.jsonl"), "{\"query\":1}\n").unwrap();
    assert_eq!(code(&attrex(d, &["hsr", "--judgments", "bad.jsonl"], None)), 3);
}

#[test]
fn convert_round_trips_and_reports_drops() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    synth_split(d);
    let o = attrex(
        d,
        &["convert", "--input", "sp/dev.jsonl", "--output", "dev.conll"],
        None,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        code(&attrex(
            d,
            &["convert", "--input", "dev.conll", "--output", "back.jsonl"],
            None
        )),
        0
    );
    assert_eq!(
        code(&attrex(
            d,
            &["convert", "--input", "back.jsonl", "--output", "again.conll"],
            None
        )),
        0
    );
    assert_eq!(
        fs::read(d.join("dev.conll")).unwrap(),
        fs::read(d.join("again.conll")).unwrap()
    );

    fs::write(d.join("empty.jsonl"), "").unwrap();
    assert_eq!(
        code(&attrex(
            d,
            &["convert", "--input", "empty.jsonl", "--output", "empty.conll"],
            None
        )),
        0
    );
    assert_eq!(fs::read(d.join("empty.conll")).unwrap(), b"");

    fs::write(
        d.join("h.jsonl"),
        "{\"query\":\"red shirt\",\"pairs\":[{\"kind\":\"Color\",\"value\":\"purple\"},{\"kind\":\"Product Type\",\"value\":\"shirt\"}],\"source\":\"human\"}\n",
    )
    .unwrap();
    let o = attrex(d, &["convert", "--input", "h.jsonl", "--output", "h.conll"], None);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("purple") && stderr(&o).contains("NotInQuery"));
    assert_eq!(
        fs::read_to_string(d.join("h.conll")).unwrap(),
        "red -X- -X- O\nshirt -X- -X- B-Product_Type\n\n"
    );

    fs::write(d.join("broken.conll"), "red B-Color\n").unwrap();
    assert_eq!(
        code(&attrex(
            d,
            &["convert", "--input", "broken.conll", "--output", "x.jsonl"],
            None
        )),
        3
    );
}

fn write_replay(path: &Path) {
    let mut replay = ReplayClient::new();
    let ex = PromptTemplate::extraction();
    let rv = PromptTemplate::review();
    let tshirt = "a large red woman t-shirt";
    replay.insert(
        &ex.to_messages(tshirt, ""),
        "[\"Size: large\", \"Color: red\", \"Gender: woman\", \"Product Type: t-shirt\"]",
    );
    let pairs = [
        ("Size", "large"),
        ("Color", "red"),
        ("Gender", "woman"),
        ("Product Type", "t-shirt"),
    ]
    .map(|(k, v)| Pair::new(k, v));
    replay.insert(&rv.to_messages(tshirt, &render_pairs(&pairs)), "True");
    let zat = "zatrains frozen meal blackened chicken alfredo";
    replay.insert(
        &ex.to_messages(zat, ""),
        "[\"Brand:zatrains\", \"Flavor: blackened chicken alfredo\", \"Product Type: frozen meal\"]",
    );
    let pairs = [
        ("Brand", "zatrains"),
        ("Flavor", "blackened chicken alfredo"),
        ("Product Type", "frozen meal"),
    ]
    .map(|(k, v)| Pair::new(k, v));
    replay.insert(&rv.to_messages(zat, &render_pairs(&pairs)), "True");
    fs::write(path, replay.to_jsonl()).unwrap();
}

#[test]
fn annotate_with_mock_and_dead_endpoint() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_replay(&d.join("replay.jsonl"));
    fs::write(
        d.join("q.txt"),
        "a large red woman t-shirt\nzatrains frozen meal blackened chicken alfredo\n",
    )
    .unwrap();
    let o = attrex(
        d,
        &[
            "annotate",
            "--queries",
            "q.txt",
            "--mock",
            "replay.jsonl",
            "--out",
            "a.jsonl",
            "--report",
            "r.json",
        ],
        None,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("format valid:  100.00% (2)"), "{}", stdout(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["format_valid"], 2);
    assert_eq!(report["review_pass"], 2);
    assert_eq!(fs::read_to_string(d.join("a.jsonl")).unwrap().lines().count(), 2);

    fs::write(
        d.join("q2.txt"),
        "a large red woman t-shirt\nsomething never recorded\n",
    )
    .unwrap();
    let o = attrex(
        d,
        &[
            "annotate",
            "--queries",
            "q2.txt",
            "--mock",
            "replay.jsonl",
            "--out",
            "b.jsonl",
            "--report",
            "r2.json",
        ],
        None,
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("format valid:  50.00%"));
    let second: Value =
        serde_json::from_str(fs::read_to_string(d.join("b.jsonl")).unwrap().lines().nth(1).unwrap()).unwrap();
    assert!(second["error"].as_str().unwrap().contains("replay"));

    let o = attrex(
        d,
        &[
            "--set",
            "llm.base_url=http://127.0.0.1:9/v1",
            "--set",
            "llm.max_retries=0",
            "--set",
            "llm.timeout_secs=2",
            "annotate",
            "--queries",
            "q.txt",
            "--out",
            "c.jsonl",
            "--report",
            "r3.json",
        ],
        None,
    );
    assert_eq!(code(&o), 5, "{}", stderr(&o));
}

const VOCAB: [&str; 4] = ["tahini", "sauce", "for", "hummus"];

/// Hand-weighted models for "tahini sauce for hummus": the CRF ranks the
/// (sauce: Cuisine Type, hummus: Product Type) reading above the
/// (sauce: Product Type, hummus: Flavor) one, and the pair classifier
/// accepts every attribute but "sauce".
fn tahini_models(d: &Path) -> (PathBuf, PathBuf) {
    let emb = d.join("onehot.txt");
    let lines: Vec<String> = VOCAB
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let v: Vec<&str> = (0..VOCAB.len()).map(|j| if i == j { "1" } else { "0" }).collect();
            format!("{w} {}", v.join(" "))
        })
        .collect();
    fs::write(&emb, lines.join("\n") + "\n").unwrap();
    let encoder = EncoderConfig {
        templates: [Template::Word].into_iter().collect(),
        embeddings: Some(emb.clone()),
        ..EncoderConfig::default()
    };
    let schema = Schema::new([("Flavor", false), ("Cuisine Type", false), ("Product Type", true)]).unwrap();
    let tag = |t: &str| schema.parse_tag(t).unwrap();
    let mut crf = CrfModel::new(
        schema.clone(),
        VOCAB.iter().map(|w| format!("w0={w}")).collect(),
        encoder.clone(),
    );
    crf.set_emission("w0=tahini", tag("B-Flavor"), 5.0);
    crf.set_emission("w0=for", tag("O"), 5.0);
    crf.set_emission("w0=sauce", tag("B-Cuisine_Type"), 3.0);
    crf.set_emission("w0=sauce", tag("B-Product_Type"), 2.0);
    crf.set_emission("w0=hummus", tag("B-Product_Type"), 3.0);
    crf.set_emission("w0=hummus", tag("B-Flavor"), 3.0);
    let crf_path = d.join("tahini_crf.json");
    let mut buf = Vec::new();
    crf.save(&mut buf).unwrap();
    fs::write(&crf_path, buf).unwrap();

    let span = SpanEncoder::from_config(&encoder).unwrap();
    let mut drc = DrcModel::zeros(span.dim(), &[], 0.5, span.fingerprint());
    let w = drc.params_mut();
    w[0] = 4.0;
    w[1] = -4.0;
    w[3] = 4.0;
    let drc_path = d.join("tahini_drc.json");
    let mut buf = Vec::new();
    drc.save(&mut buf).unwrap();
    fs::write(&drc_path, buf).unwrap();
    (crf_path, drc_path)
}

fn spans_of(v: &Value) -> Vec<(String, String)> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|s| {
            (
                s["kind"].as_str().unwrap().to_string(),
                s["value"].as_str().unwrap().to_string(),
            )
        })
        .collect()
}

#[test]
fn tahini_rerank_through_the_cli() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let (crf, drc) = tahini_models(d);
    let (crf, drc) = (crf.to_str().unwrap(), drc.to_str().unwrap());
    let q = "tahini sauce for hummus\n";

    let o = attrex(
        d,
        &["tag", "--crf", crf, "--drc-model", drc, "--drc", "on", "--k", "3"],
        Some(q),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let want = vec![
        ("Flavor".to_string(), "tahini".to_string()),
        ("Product Type".into(), "sauce".into()),
        ("Flavor".into(), "hummus".into()),
    ];
    assert_eq!(spans_of(&v["spans"]), want);
    let scores: Vec<Value> = v["drc"]["scores"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["score"].clone())
        .collect();
    assert_eq!(scores, [Value::Null, 1.into(), 2.into()]);
    assert_eq!(spans_of(&v["hypotheses"][2]["spans"]), want);

    let o = attrex(d, &["tag", "--crf", crf, "--k", "3"], Some(q));
    let v: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["spans"], v["hypotheses"][0]["spans"]);
    assert_ne!(spans_of(&v["spans"]), want);

    // A classifier trained on another vector space is refused.
    let other = DrcModel::zeros(8, &[], 0.5, SpanEncoder::hashed(8).fingerprint());
    let mut buf = Vec::new();
    other.save(&mut buf).unwrap();
    fs::write(d.join("other.json"), buf).unwrap();
    let o = attrex(
        d,
        &["tag", "--crf", crf, "--drc-model", "other.json", "--drc", "on"],
        Some(q),
    );
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let o = attrex(d, &["--set", "schema=nope.txt", "tag", "--crf", crf], Some(q));
    assert_eq!(code(&o), 2);
}
