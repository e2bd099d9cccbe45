//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::http::Method;
use chrono::{TimeZone, Utc};
use innerpond_core::clock::{Clock, FixedClock};
use innerpond_core::dialogue::dialogue_prompt;
use innerpond_core::enrichment::questions_prompt;
use innerpond_core::gateway::{GatewayError, GenerationSettings, Provider};
use innerpond_core::ids::{GroupId, PositionId};
use innerpond_core::iposition::{
    extraction_prompt, parse_extraction, Category, IPositionError, NewPosition, PositionPatch, Severity,
};
use innerpond_core::locale::Locale;
use innerpond_core::orchestra::{GroupSpeaker, OrchestraError, TopicSet};
use innerpond_core::prompts::position_profile;
use innerpond_core::store::{replay, EventKind, LogEvent};
use innerpond_core::testkit::{self, classify, ChaosProvider, FnProvider, Pipeline, RuleProvider};
use innerpond_core::{Error, Session, SessionConfig};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::json;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("prompt fidelity", Duration::from_secs(1), prompt_fidelity),
        ("extraction contract", Duration::from_secs(5), extraction_contract),
        ("scheduler anti-domination", Duration::from_secs(60), scheduler_anti_domination),
        ("skip intervention", Duration::MAX, skip_intervention),
        ("topic cardinality", Duration::MAX, topic_cardinality),
        ("log completeness", Duration::from_secs(10), log_completeness),
        ("snapshot semantics", Duration::MAX, snapshot_semantics),
        ("pond/position bijection", Duration::from_secs(30), bijection),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = match panic::catch_unwind(AssertUnwindSafe(check)) {
            Ok(outcome) => outcome,
            Err(payload) => Err(payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > limit => Err(format!("{detail}; took {elapsed:?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name:<26} {detail} ({} ms)", elapsed.as_millis()),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name:<26} {reason} ({} ms)", elapsed.as_millis());
            }
        }
    }
    let _ = panic::take_hook();
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn fixed_clock() -> Arc<dyn Clock> {
    Arc::new(FixedClock(Utc.with_ymd_and_hms(2025, 3, 14, 9, 26, 53).unwrap()))
}

fn p6_session(provider: Arc<dyn Provider>, clock: Arc<dyn Clock>, dir: Option<PathBuf>) -> Result<Session, Error> {
    Session::create(
        "acceptance",
        testkit::p6_intake(),
        SessionConfig::default(),
        provider,
        clock,
        dir.as_deref(),
    )
}

fn golden(name: &str) -> String {
    let path = format!("{}/../core/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn same(label: &str, expected: &str, actual: &str) -> Result<(), String> {
    let (expected, actual) = (expected.trim_end(), actual.trim_end());
    if expected == actual {
        return Ok(());
    }
    let line = expected
        .lines()
        .zip(actual.lines())
        .position(|(e, a)| e != a)
        .map_or_else(|| "at the end".to_string(), |i| format!("at line {}", i + 1));
    Err(format!("{label} prompt differs from golden {line}"))
}

fn prompt_fidelity() -> Outcome {
    let ko = Locale::from_tag("ko");
    let a = testkit::position("p1", "Myself, Seeking Stability");
    let b = testkit::position("p2", "Myself, Losing Myself in Cooking");
    let profile = "<<profile>>";
    same(
        "extraction",
        &golden("extraction_ko.txt").replace("{input}", profile),
        &extraction_prompt(profile, &ko),
    )?;
    same(
        "enrichment",
        &golden("enrichment_questions_ko.txt").replace("{input}", &position_profile(&a)),
        &questions_prompt(&a, &ko),
    )?;
    same(
        "1:1 dialogue",
        &golden("dialogue_ko.txt").replace("{input}", &position_profile(&a)),
        &dialogue_prompt(&a, &ko),
    )?;
    let topics = innerpond_core::orchestra::topics_request(&a, &b, &GenerationSettings::default());
    same("topics", &golden("topics.txt"), &topics.system_prompt)?;
    Ok("4 prompts byte-identical".into())
}

fn extraction_contract() -> Outcome {
    let session = p6_session(Arc::new(RuleProvider::default()), fixed_clock(), None).map_err(|e| e.to_string())?;
    let positions: Vec<_> = session.positions().iter().collect();
    ensure!(positions.len() == 10, "{} live positions", positions.len());
    let categories: BTreeSet<Category> = positions.iter().map(|p| p.category).collect();
    ensure!(categories.len() == 3, "categories {categories:?}");
    ensure!(
        positions.iter().all(|p| p.name.starts_with("Myself, ")),
        "a name lacks the prefix"
    );
    ensure!(session.pond().layouts.len() == 10, "leaf count");

    // total -> (rejected, warned about the count)
    let bands = [
        (7, true, true),
        (8, false, true),
        (9, false, true),
        (10, false, false),
        (11, false, true),
        (12, false, true),
        (13, true, true),
    ];
    let locale = Locale::default();
    for (total, rejected, warned) in bands {
        let text = testkit::extraction_response(total - 6, 3, 3);
        let mut n = 0;
        let diagnostics = match parse_extraction(&text, &locale, || {
            n += 1;
            PositionId::from_seq(n)
        }) {
            Ok(result) => {
                ensure!(!rejected, "total {total} accepted");
                ensure!(result.positions.len() == total, "total {total}: {} kept", result.positions.len());
                result.diagnostics
            }
            Err(IPositionError::ValidationFailed(d)) => {
                ensure!(rejected, "total {total} rejected");
                d
            }
            Err(e) => return Err(format!("total {total}: unexpected {e}")),
        };
        let count_warn = diagnostics
            .iter()
            .any(|d| d.severity == Severity::Warn && d.message.contains(&total.to_string()));
        ensure!(count_warn == warned, "total {total}: count warning {count_warn}");
    }
    Ok("10 positions, 3 categories; bands 7-13 as specified".into())
}

/// Whether a user message names `agent` and not the other member.
fn addresses(text: &str, agent: &str, other: &str) -> bool {
    let lower = text.to_lowercase();
    lower.contains(&agent.to_lowercase()) && !lower.contains(&other.to_lowercase())
}

fn scheduler_anti_domination() -> Outcome {
    const SESSIONS: u64 = 1000;
    let mut violations = Vec::new();
    let mut agent_turns = 0;
    let mut failures = 0;
    for seed in 0..SESSIONS {
        let provider = Arc::new(ChaosProvider::new(seed));
        let mut rng = StdRng::seed_from_u64(seed ^ 0x5eed);
        let session = (0..20).find_map(|_| p6_session(provider.clone(), fixed_clock(), None).ok());
        let Some(mut session) = session else {
            return Err(format!("seed {seed}: session creation never succeeded"));
        };
        let (a, b) = (PositionId::from_seq(1), PositionId::from_seq(rng.random_range(2..=10)));
        let topics = (0..20).find_map(|_| session.generate_topics(&a, &b).ok());
        let Some(topics) = topics else {
            return Err(format!("seed {seed}: no topics"));
        };
        let topic = topics.questions[rng.random_range(0..3)].clone();
        if session.start_group(&a, &b, &topic).is_err() {
            failures += 1;
        }
        let gid = GroupId::from_seq(1);
        let names: Vec<String> = session.group(&gid).map_err(|e| e.to_string())?.members.iter().map(|m| m.name.clone()).collect();
        for _ in 0..rng.random_range(4..14) {
            let result = match rng.random_range(0..6) {
                0..=1 => session.skip(&gid),
                2 => session.mediate(&gid, "What do you both think?"),
                3 => session.mediate(&gid, &format!("{}, what do you say?", names[0])),
                4 => session.mediate(&gid, &format!("{} wants to hear from you", names[1].to_uppercase())),
                _ => session.mediate(&gid, &format!("{} and {}, talk to each other.", names[0], names[1])),
            };
            if result.is_err() {
                failures += 1;
            }
        }
        let group = session.group(&gid).map_err(|e| e.to_string())?;
        let mut last: Option<(GroupSpeaker, bool)> = None;
        for turn in &group.transcript {
            match turn.speaker {
                GroupSpeaker::AgentA | GroupSpeaker::AgentB => {
                    agent_turns += 1;
                    if let Some((prev, excused)) = last {
                        if prev == turn.speaker && !excused {
                            violations.push(seed);
                        }
                    }
                    last = Some((turn.speaker, false));
                }
                GroupSpeaker::User => {
                    if let Some((prev, excused)) = &mut last {
                        let (me, other) = match prev {
                            GroupSpeaker::AgentA => (&names[0], &names[1]),
                            _ => (&names[1], &names[0]),
                        };
                        *excused |= addresses(&turn.text, me, other);
                    }
                }
                GroupSpeaker::System => {}
            }
        }
        session.verify().map_err(|e| format!("seed {seed}: {e}"))?;
    }
    ensure!(violations.is_empty(), "{} violations, first at seed {}", violations.len(), violations[0]);
    Ok(format!(
        "{SESSIONS} sessions, {agent_turns} agent turns, {failures} injected failures, 0 violations"
    ))
}

fn skip_intervention() -> Outcome {
    const EXPECTED: &str = "Do not repeat viewpoints; engage more deeply with each other's perspectives";
    let mut session = p6_session(Arc::new(RuleProvider::default()), fixed_clock(), None).map_err(|e| e.to_string())?;
    let (a, b) = (PositionId::from_seq(1), PositionId::from_seq(2));
    let topics = session.generate_topics(&a, &b).map_err(|e| e.to_string())?;
    let (group, _) = session
        .start_group(&a, &b, &topics.questions[0])
        .map_err(|e| e.to_string())?;
    let mut skips = 0;
    for i in 0..25 {
        let before = session.group(&group.id).unwrap().transcript.len();
        if i % 5 == 4 {
            session.mediate(&group.id, "Go on.").map_err(|e| e.to_string())?;
            continue;
        }
        session.skip(&group.id).map_err(|e| e.to_string())?;
        skips += 1;
        let intervention = &session.group(&group.id).unwrap().transcript[before];
        ensure!(intervention.speaker == GroupSpeaker::System, "skip {skips}: speaker");
        ensure!(intervention.text.as_bytes() == EXPECTED.as_bytes(), "skip {skips}: {:?}", intervention.text);
    }
    let group = session.group(&group.id).unwrap();
    let appended = group.transcript.iter().filter(|t| t.text == EXPECTED).count();
    ensure!(appended == skips, "{appended} interventions for {skips} skips");
    Ok(format!("{skips} skips, each appended the exact constant"))
}

fn malformed_topics(rng: &mut StdRng, i: usize) -> String {
    let q = |n: usize| -> Vec<String> { (0..n).map(|k| format!("Question {k} for case {i}?")).collect() };
    match i % 10 {
        0 => json!({ "discussion_questions": q([0, 1, 2, 4, 5, 7][rng.random_range(0..6)]) }).to_string(),
        1 => json!({ "discussion_questions": [q(1)[0], "   ", q(3)[2]] }).to_string(),
        2 => json!({ "questions": q(3) }).to_string(),
        3 => format!("Sure! Here are some questions: {}", q(3).join(" ")),
        4 => {
            let full = json!({ "discussion_questions": q(3) }).to_string();
            let cut = rng.random_range(1..full.len() - 1);
            full[..cut].to_string()
        }
        5 => json!({ "discussion_questions": [1, null, true] }).to_string(),
        6 => json!(q(3)).to_string(),
        7 => format!(
            "Here you go:\n```json\n{}\n```\nLet me know!",
            json!({ "discussion_questions": q(3) })
        ),
        8 => json!({ "discussion_questions": q(3), "extra": "ignored" }).to_string(),
        _ => String::new(),
    }
}

fn topic_cardinality() -> Outcome {
    let fixture = Arc::new(Mutex::new(String::new()));
    let current = fixture.clone();
    let rules = RuleProvider::default();
    let provider = Arc::new(FnProvider::new(move |request| {
        if classify(request) == Some(Pipeline::Topics) {
            let text = current.lock().unwrap().clone();
            if text.is_empty() {
                return Err(GatewayError::Timeout { attempts: 1 });
            }
            return Ok(text);
        }
        rules.answer(request)
    }));
    let mut session = p6_session(provider, fixed_clock(), None).map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(7);
    let (a, b) = (PositionId::from_seq(3), PositionId::from_seq(4));
    let (mut accepted, mut rejected) = (0, 0);
    for i in 0..100 {
        *fixture.lock().unwrap() = malformed_topics(&mut rng, i);
        let events = session.events().len();
        match session.generate_topics(&a, &b) {
            Ok(TopicSet { questions, .. }) => {
                ensure!(questions.len() == 3, "case {i}: {} questions", questions.len());
                ensure!(questions.iter().all(|q| !q.trim().is_empty()), "case {i}: blank question");
                ensure!(session.events().len() == events + 1, "case {i}: not logged");
                accepted += 1;
            }
            Err(Error::Orchestra(
                OrchestraError::WrongQuestionCount(_) | OrchestraError::Extract(_) | OrchestraError::Gateway(_),
            )) => {
                ensure!(session.events().len() == events, "case {i}: failed call was logged");
                rejected += 1;
            }
            Err(other) => return Err(format!("case {i}: untyped failure {other:?}")),
        }
    }
    Ok(format!("100 fixtures: {accepted} with exactly 3 questions, {rejected} typed errors"))
}

fn log_completeness() -> Outcome {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async {
        let app = common::app(None);
        let sid = app.create_p6().await;
        app.drive_script(&sid, &common::demo_script()).await;
        let log = app.ok(Method::GET, &format!("/sessions/{sid}/log"), None).await;
        let events: Vec<LogEvent> = serde_json::from_value(log).map_err(|e| e.to_string())?;
        let kinds: BTreeSet<String> = events.iter().map(|e| format!("{:?}", e.kind)).collect();
        let missing: Vec<_> = EventKind::ALL
            .iter()
            .filter(|k| !kinds.contains(&format!("{k:?}")))
            .collect();
        ensure!(missing.is_empty(), "no events of kind {missing:?}");

        let rebuilt = replay(&events).map_err(|e| e.to_string())?;
        let handle = app.state.handle(&sid).map_err(|e| e.message.clone())?;
        let live = handle.lock().map_err(|e| e.message.clone())?;
        ensure!(&rebuilt == live.state(), "replayed state differs from live state");
        Ok(format!(
            "{} events covering all {} kinds; replay equals live state",
            events.len(),
            EventKind::ALL.len()
        ))
    })
}

fn snapshot_semantics() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut session = p6_session(
        Arc::new(RuleProvider::default()),
        fixed_clock(),
        Some(dir.path().to_path_buf()),
    )
    .map_err(|e| e.to_string())?;
    let before_layouts: Vec<_> = session.pond().layouts.values().cloned().collect();
    let before_positions: Vec<_> = session.positions().iter().cloned().collect();

    let saved = session.save_snapshot(None).map_err(|e| e.to_string())?;
    ensure!(saved.label == "P6's InnerPond_2025-03-14T09:26:53Z", "label {:?}", saved.label);

    let p = PositionId::from_seq;
    let fail = |e: Error| e.to_string();
    session.move_leaf(&p(1), 0.05, 0.95).map_err(fail)?;
    session.resize_leaf(&p(2), 1.9).map_err(fail)?;
    session.recolor_leaf(&p(3), "#ff0000").map_err(fail)?;
    session.delete_position(&p(4)).map_err(fail)?;
    session
        .edit_position(
            &p(5),
            &PositionPatch {
                narrative: Some("Changed after the snapshot.".into()),
                ..Default::default()
            },
        )
        .map_err(fail)?;
    session
        .add_position(NewPosition {
            name: "Myself, a Latecomer".into(),
            core_viewpoint: "I arrived after the photo.".into(),
            narrative: "Nobody saw me in the picture.".into(),
            category: Category::Common,
        })
        .map_err(fail)?;

    let check = |snap: &innerpond_core::pond::Snapshot, source: &str| -> Result<(), String> {
        ensure!(snap.layouts == before_layouts, "{source}: layouts changed");
        ensure!(snap.positions == before_positions, "{source}: positions changed");
        Ok(())
    };
    check(session.load_snapshot(&saved.label).map_err(fail)?, "memory")?;

    let file = session.dir().unwrap().snapshot_file(&saved.label);
    let on_disk: innerpond_core::pond::Snapshot =
        serde_json::from_slice(&std::fs::read(&file).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    check(&on_disk, "file")?;

    let reloaded = Session::load(
        dir.path(),
        "acceptance",
        Arc::new(RuleProvider::default()),
        fixed_clock(),
    )
    .map_err(fail)?;
    check(reloaded.load_snapshot(&saved.label).map_err(fail)?, "reloaded")?;

    let named = session.save_snapshot(Some("Jisoo")).map_err(fail)?;
    ensure!(named.label == "Jisoo's InnerPond_2025-03-14T09:26:53Z", "label {:?}", named.label);
    let again = session.save_snapshot(None).map_err(fail)?;
    ensure!(again.label == "P6's InnerPond_2025-03-14T09:26:53Z (2)", "label {:?}", again.label);
    Ok(format!("pre-mutation state restored; label {:?}", saved.label))
}

fn bijection() -> Outcome {
    const OPS: usize = 10_000;
    let mut session = p6_session(Arc::new(RuleProvider::default()), fixed_clock(), None).map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(10_000);
    let (mut ok, mut rejected, mut violations) = (0, 0, 0);
    let mut added = 0;
    for _ in 0..OPS {
        let live: Vec<PositionId> = session.positions().iter().map(|p| p.id.clone()).collect();
        let target = if live.is_empty() || rng.random_bool(0.05) {
            PositionId::from_seq(rng.random_range(1..10_000))
        } else {
            live[rng.random_range(0..live.len())].clone()
        };
        let result = match rng.random_range(0..5) {
            0 => {
                added += 1;
                session
                    .add_position(NewPosition {
                        name: format!("Myself, Voice Number {added}"),
                        core_viewpoint: "I am here for the test.".into(),
                        narrative: "I was added at random.".into(),
                        category: Category::ALL[rng.random_range(0..3)],
                    })
                    .map(|_| ())
            }
            1 => session.delete_position(&target),
            2 => session
                .move_leaf(&target, rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5))
                .map(|_| ()),
            3 => session.resize_leaf(&target, rng.random_range(0.25..2.25)).map(|_| ()),
            _ => {
                let color = if rng.random_bool(0.9) {
                    format!("#{:06x}", rng.random_range(0..0x1000000))
                } else {
                    "greenish".to_string()
                };
                session.recolor_leaf(&target, &color).map(|_| ())
            }
        };
        match result {
            Ok(()) => ok += 1,
            Err(_) => rejected += 1,
        }
        let positions: BTreeSet<&PositionId> = session.positions().iter().map(|p| &p.id).collect();
        let leaves: BTreeSet<&PositionId> = session.pond().layouts.values().map(|l| &l.position_id).collect();
        if positions != leaves || session.pond().layouts.len() != session.positions().len() {
            violations += 1;
        }
    }
    ensure!(violations == 0, "{violations} violations");
    session.verify().map_err(|e| e.to_string())?;
    Ok(format!("{OPS} ops ({ok} applied, {rejected} rejected), 0 violations"))
}
