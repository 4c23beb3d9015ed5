mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use defectforge_core::instruction::{
    execute, fallback_template, mllm_generate, parse_instruction, resolve, template_for, validate, CategoryMetadata,
    EndpointConfig, Source,
};
use defectforge_core::synth::geodesic::{deform_1d, expand_region, GeodesicSupport, Polarity};
use defectforge_core::synth::SynthesisDetails;
use defectforge_core::{DefectType, Error, Point, PointCloud};

use common::{sphere, unit_profile};

fn meta() -> CategoryMetadata {
    CategoryMetadata::new("sphere").unwrap()
}

#[test]
fn templates_are_deterministic_and_valid_on_a_sphere() {
    let cloud = sphere(2000, 11);
    let profile = unit_profile();
    for u in DefectType::ALL {
        assert_eq!(template_for(u, 1), template_for(u, 1));
        for seed in 0..8 {
            let instr = template_for(u, seed);
            let report = validate(&instr, &cloud, &profile);
            assert!(report.valid, "{u} seed {seed}: {}", report.summary());
        }
    }
    assert!(matches!(fallback_template("warp", &meta(), 1), Err(Error::Contract(_))));
}

#[test]
fn templates_validate_on_a_small_cloud() {
    let cloud = sphere(100, 5);
    let profile = unit_profile();
    for u in DefectType::ALL {
        for seed in 0..5 {
            let report = validate(&template_for(u, seed), &cloud, &profile);
            assert!(report.valid, "{u} seed {seed}: {}", report.summary());
        }
    }
}

#[test]
fn oversized_radius_is_rejected() {
    let cloud = sphere(500, 1);
    let instr = parse_instruction(r#"{"type":"bump","params":{"m":1,"r":2.0,"d":0.02,"dir":1},"seed":7}"#).unwrap();
    let report = validate(&instr, &cloud, &unit_profile());
    assert!(!report.valid);
    assert!(report.violations.iter().any(|v| v.field == "params.r" && v.rule == "range"));
    // Validation is pure.
    assert_eq!(report, validate(&instr, &cloud, &unit_profile()));
}

#[test]
fn plane_missing_the_cloud_has_an_empty_band() {
    let cloud = sphere(500, 1);
    let instr = parse_instruction(
        r#"{"type":"crack","params":{"tau":0.03,"rim":0.05,"plane":{"normal":[0,0,1],"point":[0,0,5]}},"seed":1}"#,
    )
    .unwrap();
    let report = validate(&instr, &cloud, &unit_profile());
    assert!(report.violations.iter().any(|v| v.rule == "empty_band"), "{}", report.summary());
}

#[test]
fn all_violations_are_listed() {
    let cloud = sphere(300, 2);
    let instr = parse_instruction(
        r#"{"type":"freeform","region":{"anchors":[0,1,2,999]},"params":{"epsilon":0.9,"lambda":2,"kernel_count":0},"seed":1}"#,
    )
    .unwrap();
    let report = validate(&instr, &cloud, &unit_profile());
    let fields: Vec<&str> = report.violations.iter().map(|v| v.field.as_str()).collect();
    for f in ["region.anchors[3]", "params.epsilon", "params.lambda", "params.kernel_count"] {
        assert!(fields.contains(&f), "{fields:?}");
    }
}

#[test]
fn coplanar_freeform_anchors_are_rejected() {
    let base = sphere(2000, 3);
    let mut pts = base.points().to_vec();
    for k in 0..4 {
        let t = k as f64 * 0.3;
        pts.push(Point::new(t.cos(), t.sin(), 0.0));
    }
    let cloud = PointCloud::new("s", pts).unwrap();
    let instr = parse_instruction(
        r#"{"type":"freeform","region":{"anchors":[2000,2001,2002,2003]},"params":{"epsilon":0.05},"seed":1}"#,
    )
    .unwrap();
    let report = validate(&instr, &cloud, &unit_profile());
    assert!(report.violations.iter().any(|v| v.rule == "non_coplanar"), "{}", report.summary());
}

#[test]
fn bump_dispatch_matches_direct_deformation() {
    let cloud = sphere(2000, 4);
    let instr =
        parse_instruction(r#"{"type":"bump","region":{"anchors":[17]},"params":{"r":0.08,"d":0.03,"dir":1},"seed":3}"#)
            .unwrap();
    let out = execute(&instr, &cloud, &unit_profile()).unwrap();
    let support = GeodesicSupport {
        indices: vec![17],
        anchors: vec![17],
        segment_costs: vec![],
    };
    let field = expand_region(&cloud, &support, 0.08).unwrap();
    let direct = deform_1d(&cloud, &field, Polarity::Outward, 0.03, DefectType::Bump).unwrap();
    assert_eq!(out.cloud, direct.cloud);
    assert_eq!(out.mask, direct.mask);
    assert_eq!(out.provenance.source, Source::Direct);
    assert_eq!(parse_instruction(&out.provenance.instruction.to_string()).unwrap(), instr);
}

#[test]
fn crack_removes_points_and_execution_is_repeatable() {
    let cloud = sphere(2000, 6);
    let instr = template_for(DefectType::Crack, 9);
    let a = execute(&instr, &cloud, &unit_profile()).unwrap();
    let b = execute(&instr, &cloud, &unit_profile()).unwrap();
    assert!(a.cloud.len() < cloud.len());
    assert_eq!(a.cloud, b.cloud);
    assert_eq!(a.mask, b.mask);
    assert_eq!(
        serde_json::to_string(&a.provenance).unwrap(),
        serde_json::to_string(&b.provenance).unwrap()
    );
    assert!(matches!(a.provenance.details, SynthesisDetails::Crack { .. }));
}

#[test]
fn every_template_executes() {
    let cloud = sphere(2000, 8);
    for u in DefectType::ALL {
        for seed in 0..4 {
            let out = execute(&template_for(u, seed), &cloud, &unit_profile())
                .unwrap_or_else(|e| panic!("{u} seed {seed}: {e}"));
            assert_eq!(out.mask.len(), out.cloud.len());
            assert_eq!(out.mask.defect, Some(u));
        }
    }
}

#[test]
fn resolve_branches() {
    let cloud = sphere(1000, 2);
    let profile = unit_profile();
    let good = r#"{"type":"dent","params":{"m":1,"r":0.05,"d":0.02,"dir":-1},"seed":5}"#;
    let r = resolve(Some(good), DefectType::Dent, &cloud, &meta(), &profile, 1);
    assert_eq!(r.source, Source::Model);
    assert_eq!(r.instruction, parse_instruction(good).unwrap());

    let fenced = format!("Here you go:\n```json\n{good}\n```");
    assert_eq!(resolve(Some(&fenced), DefectType::Dent, &cloud, &meta(), &profile, 1).source, Source::Model);

    let r = resolve(Some("not an instruction"), DefectType::Dent, &cloud, &meta(), &profile, 1);
    assert_eq!(r.source, Source::Rule);
    assert!(r.rejection.is_some());
    assert_eq!(r.instruction, template_for(DefectType::Dent, 1));

    let r = resolve(None, DefectType::Hole, &cloud, &meta(), &profile, 4);
    assert_eq!((r.source, r.rejection), (Source::Rule, None));

    let r = resolve(Some(good), DefectType::Bump, &cloud, &meta(), &profile, 1);
    assert_eq!(r.source, Source::Rule);
}

/// Serves one canned HTTP response and returns the request body it received.
fn mock_endpoint(status: u16, body: String) -> (String, thread::JoinHandle<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut length = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if line == "\r\n" || line.is_empty() {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap();
            }
        }
        let mut req = vec![0; length];
        reader.read_exact(&mut req).unwrap();
        let reply = format!(
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        stream.write_all(reply.as_bytes()).unwrap();
        String::from_utf8(req).unwrap()
    });
    (url, handle)
}

fn config(url: String, key: Option<&str>) -> EndpointConfig {
    EndpointConfig {
        url,
        key: key.map(str::to_string),
        model: "test-model".into(),
        timeout: Duration::from_secs(5),
    }
}

#[test]
fn model_client_returns_first_choice_verbatim() {
    let text = r#"{"type":"bump","params":{"r":0.05,"d":0.02},"seed":1}"#;
    let body = serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string();
    let (url, server) = mock_endpoint(200, body);
    let out = mllm_generate(&meta(), DefectType::Bump, &config(url, Some("k"))).unwrap();
    assert_eq!(out, text);
    let request: serde_json::Value = serde_json::from_str(&server.join().unwrap()).unwrap();
    assert_eq!(request["model"], "test-model");
    assert_eq!(request["messages"][0]["role"], "system");
    assert!(request["messages"][1]["content"].as_str().unwrap().contains("Part category: sphere"));
}

#[test]
fn model_client_errors() {
    let (url, server) = mock_endpoint(500, "{}".into());
    let err = mllm_generate(&meta(), DefectType::Bump, &config(url, Some("k"))).unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err}");
    server.join().unwrap();

    let err = mllm_generate(&meta(), DefectType::Bump, &config("http://127.0.0.1:9/".into(), None)).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}
