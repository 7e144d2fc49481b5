mod common;

use common::*;

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = chainrag(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_reports_one_error_line() {
    let out = chainrag(&["index", "--config", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    let line = err.lines().last().unwrap();
    assert!(line.starts_with("error: kind=config message=\""), "{err}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let toy = Toy::new();
    let text = std::fs::read_to_string(toy.path("config.toml")).unwrap();
    std::fs::write(toy.path("config.toml"), text.replace("[pipeline]\n", "[pipeline]\nmax_iteratons = 3\n")).unwrap();
    let out = toy.run(&["index"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("kind=config"), "{}", stderr(&out));
}

#[test]
fn index_built_with_other_embedding_is_refused() {
    let toy = Toy::indexed();
    let text = std::fs::read_to_string(toy.path("config.toml")).unwrap();
    std::fs::write(toy.path("config.toml"), text.replace("dim = 512", "dim = 64")).unwrap();
    let out = toy.run(&["retrieve", "--question", "Where is Boston?"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("kind=config"), "{}", stderr(&out));
}

#[test]
fn retrieve_and_answer_on_the_toy_corpus() {
    let toy = Toy::indexed();
    let q = "What was the population at the 2001 census of the town where Kirton End is located?";
    let payload = stdout_json(&toy.run(&["retrieve", "--question", q]));
    let docs = payload["documents"].as_array().unwrap();
    assert_eq!(docs.len(), 3);
    let scores: Vec<f64> = docs.iter().map(|d| d["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]), "{scores:?}");
    let ids: Vec<&str> = docs.iter().map(|d| d["doc_id"].as_str().unwrap()).collect();
    assert!(ids.contains(&"boston"), "{ids:?}");
    assert_eq!(payload["iterations"], 2);
    assert_eq!(payload["chain"][0], "<Kirton End; located in; Boston>");

    let trace = toy.path("trace.json");
    let answered = stdout_json(&toy.run(&["answer", "--question", q, "--trace", trace.to_str().unwrap()]));
    assert_eq!(answered["answer"], "35,124");
    let trace: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(trace).unwrap()).unwrap();
    assert_eq!(trace["stop"], "terminated");
}

#[test]
fn retrieve_rejects_zero_k() {
    let toy = Toy::indexed();
    let out = toy.run(&["retrieve", "--question", "q", "--k", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("kind=usage"));
}

#[test]
fn eval_writes_reports() {
    let toy = Toy::indexed();
    let out_dir = toy.path("out");
    let summary = stdout_json(&toy.run(&[
        "eval",
        "--dataset",
        toy.path("dataset.jsonl").to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]));
    assert_eq!(summary["questions"], 5);
    assert_eq!(summary["errors"], 0);
    assert_eq!(summary["em"], 1.0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 5);
    assert!(out_dir.join("report.md").exists());
}

#[test]
fn extraction_resumes_after_failures() {
    let toy = Toy::new();
    let kg_before = std::fs::read_to_string(toy.path("kg.jsonl")).unwrap();
    std::fs::remove_file(toy.path("kg.jsonl")).unwrap();

    // Drop one scripted response so its document fails.
    let script_path = toy.path("extraction_script.json");
    let full = std::fs::read_to_string(&script_path).unwrap();
    let mut script: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&full).unwrap();
    let dropped = script.keys().find(|k| k.contains("Title: Boston")).unwrap().clone();
    script.remove(&dropped);
    std::fs::write(&script_path, serde_json::to_string(&script).unwrap()).unwrap();

    let out = toy.run(&["extract"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("kind=extraction"), "{}", stderr(&out));
    let stats: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((stats["extracted"].as_u64(), stats["failed"].as_u64()), (Some(19), Some(1)));

    std::fs::write(&script_path, full).unwrap();
    let stats = stdout_json(&toy.run(&["extract"]));
    assert_eq!((stats["cached"].as_u64(), stats["extracted"].as_u64()), (Some(19), Some(1)));

    // Same triples as the shipped KG, whatever the line order or metadata.
    let kg = |text: &str| {
        text.lines()
            .map(|l| {
                let v: serde_json::Value = serde_json::from_str(l).unwrap();
                (v["doc_id"].to_string(), v["triples"].to_string())
            })
            .collect::<std::collections::BTreeMap<_, _>>()
    };
    assert_eq!(kg(&std::fs::read_to_string(toy.path("kg.jsonl")).unwrap()), kg(&kg_before));
}

#[test]
fn silver_data_and_training_round_trip() {
    let toy = Toy::indexed();
    let text = std::fs::read_to_string(toy.path("config.toml")).unwrap();
    std::fs::write(toy.path("config.toml"), format!("{text}\n[silver]\nnegatives = 2\n\n[train]\nepochs = 2\n")).unwrap();
    let silver = stdout_json(&toy.run(&["build-silver", "--qa", toy.path("dataset.jsonl").to_str().unwrap()]));
    assert!(silver["examples"].as_u64().unwrap() > 0, "{silver}");
    let model = toy.path("model.json");
    let trained = stdout_json(&toy.run(&["train", "--out", model.to_str().unwrap()]));
    assert_eq!(trained["epoch_losses"].as_array().unwrap().len(), 2);
    assert!(model.exists());
}
