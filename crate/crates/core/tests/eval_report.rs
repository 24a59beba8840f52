use std::collections::HashMap;

use interleave::eval::{evaluate, render_json, render_markdown, EvalRecord, HeuristicJudge, Report};
use interleave::latency::RateConfig;
use serde_json::Value;

fn records() -> Vec<EvalRecord> {
    let rec = |id: &str, category: &str, correct: bool, raw: &str| EvalRecord {
        id: id.into(),
        category: category.into(),
        correct,
        sequence_raw: raw.into(),
    };
    vec![
        rec("1", "S", true, "<|thinking|>add ten and four<|answer|>She spends $14 in total."),
        rec("2", "S", false, "<|thinking|>add<|answer|>It is 12."),
        rec("3", "L", true, "<|thinking|>one two three four five six<|answer|>The sum is 21.<|thinking|>check it<|answer|>So it is 21."),
        rec("4", "R1", true, "<|answer|>broken stream"),
        rec("5", "R1", false, "<|thinking|>w w w w w w w w<|answer|>No."),
    ]
}

/// `| key | value |` rows of the markdown, keyed by section and first cell.
fn markdown_cells(md: &str) -> HashMap<(String, String), Vec<String>> {
    let mut section = String::new();
    let mut out = HashMap::new();
    for line in md.lines() {
        if let Some(h) = line.strip_prefix("## ") {
            section = h.to_string();
        } else if line.starts_with('|') && !line.starts_with("|---") {
            let cells: Vec<String> = line.trim_matches('|').split('|').map(|c| c.trim().to_string()).collect();
            out.insert((section.clone(), cells[0].clone()), cells[1..].to_vec());
        }
    }
    out
}

fn num(v: &Value) -> String {
    let f = v.as_f64().unwrap();
    if v.is_u64() {
        v.to_string()
    } else {
        format!("{f}")
    }
}

#[test]
fn markdown_matches_json_field_for_field() {
    let report = evaluate(&records(), Some(&HeuristicJudge::default()), Some(&RateConfig::default())).unwrap();
    let json: Value = serde_json::from_str(&render_json(&report).unwrap()).unwrap();
    let md = render_markdown(&report);
    let cells = markdown_cells(&md);

    for c in json["benchmark"]["categories"].as_array().unwrap() {
        let row = &cells[&("Accuracy".to_string(), c["name"].as_str().unwrap().to_string())];
        assert_eq!(row[0], num(&c["n"]));
        assert_eq!(row[1], num(&c["score"]));
    }
    assert!(md.contains(&format!("Weighted total: {}", num(&json["benchmark"]["total_score"]))));

    let sections = [
        ("length_stats", "Thinking segment lengths"),
        ("simulation", "Latency simulation"),
        ("fluency", "Fluency"),
    ];
    let mut compared = 0;
    for (key, title) in sections {
        for (field, value) in json[key].as_object().unwrap() {
            if let Some(row) = cells.get(&(title.to_string(), field.clone())) {
                let want = match value {
                    Value::String(s) => s.clone(),
                    v => num(v),
                };
                assert_eq!(row[0], want, "{key}.{field}");
                compared += 1;
            }
        }
    }
    for (i, n) in json["fluency"]["counts"].as_array().unwrap().iter().enumerate() {
        assert_eq!(cells[&("Fluency".to_string(), format!("score {i}"))][0], num(n));
    }
    assert!(compared >= 14);
}

#[test]
fn reports_are_byte_stable() {
    let run = || {
        let r = evaluate(&records(), Some(&HeuristicJudge::default()), Some(&RateConfig::default())).unwrap();
        (render_json(&r).unwrap(), render_markdown(&r))
    };
    assert_eq!(run(), run());
}

#[test]
fn absent_sections_are_left_out() {
    let r = evaluate(&records(), None, None).unwrap();
    let json = render_json(&r).unwrap();
    let back: Report = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
    assert!(!json.contains("\"fluency\"") && !json.contains("\"simulation\""));
    let md = render_markdown(&r);
    assert!(!md.contains("## Fluency") && !md.contains("## Latency"));
    assert!(md.contains("## Thinking segment lengths"));
}
