use std::sync::Arc;
use std::time::Duration;

use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use tinker::service::Effects;
use tinker::{router, spawn_ticker, AppState, ManualClock};
use tinker_core::graph::Expects;
use tinker_core::log::Record;
use tinker_core::narrator::StubNarrator;
use tinker_core::session::driver::pick_token;
use tinker_core::session::{Repair, SessionStatus, Speaker};
use tinker_core::store::MemoryStore;
use tinker_core::token::REDIRECT_TEXT;
use tinker_core::Resources;

const TOKEN: &str = "secret-token";

struct Server {
    base: String,
    app: Arc<AppState>,
    clock: Arc<ManualClock>,
    http: Client,
}

impl Server {
    async fn start() -> Server {
        let clock = Arc::new(ManualClock::new(1_000_000));
        let app = Arc::new(
            AppState::new(
                Arc::new(MemoryStore::new()),
                Resources::bundled(),
                Arc::new(StubNarrator),
                clock.clone(),
            )
            .with_token(Some(TOKEN.into())),
        );
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let svc = router(app.clone());
        tokio::spawn(async move { axum::serve(listener, svc).await.unwrap() });
        Server {
            base,
            app,
            clock,
            http: Client::new(),
        }
    }

    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self
            .http
            .get(format!("{}{path}", self.base))
            .bearer_auth(TOKEN)
            .send()
            .await
            .unwrap();
        let status = r.status();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self
            .http
            .post(format!("{}{path}", self.base))
            .bearer_auth(TOKEN)
            .json(&body)
            .send()
            .await
            .unwrap();
        let status = r.status();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    async fn create(&self, profile: &str, condition: &str) -> Effects {
        let (status, body) = self
            .post("/api/sessions", json!({"profile_id": profile, "condition": condition}))
            .await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        serde_json::from_value(body).unwrap()
    }

    async fn event(&self, id: &str, body: Value) -> Effects {
        self.clock.advance(500);
        let (status, body) = self.post(&format!("/api/sessions/{id}/events"), body).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        serde_json::from_value(body).unwrap()
    }

    async fn effects(&self, id: &str, after: u64) -> Effects {
        let (status, body) = self.get(&format!("/api/sessions/{id}/effects?after={after}")).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        serde_json::from_value(body).unwrap()
    }

    /// Lets the agent finish, then speaks a whole turn followed by a pause
    /// long enough to close it.
    async fn say(&self, id: &str, text: &str) -> Effects {
        self.event(id, json!({"kind": "agent-speech-ended"})).await;
        self.event(id, json!({"kind": "utterance", "text": text})).await;
        self.clock.advance(4_000);
        self.app.tick().await;
        self.effects(id, 0).await
    }
}

fn agent_texts(e: &Effects) -> Vec<String> {
    e.entries
        .iter()
        .filter_map(|x| match &x.record {
            Record::Turn { turn } if turn.speaker == Speaker::Agent => Some(turn.text.clone()),
            _ => None,
        })
        .collect()
}

#[tokio::test]
async fn health_is_open_and_the_api_needs_the_token() {
    let s = Server::start().await;
    let r = s.http.get(format!("{}/health", s.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.json::<Value>().await.unwrap()["narrator"], "stub");
    let r = s.http.get(format!("{}/api/profiles/kid/stories", s.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::UNAUTHORIZED);
    let r = s
        .http
        .get(format!("{}/api/profiles/kid/stories", s.base))
        .bearer_auth("wrong")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::UNAUTHORIZED);
    assert_eq!(r.json::<Value>().await.unwrap()["error"], "Unauthorized");
}

#[tokio::test]
async fn create_session_speaks_the_opening_and_locks_input() {
    let s = Server::start().await;
    let e = s.create("kid", "structured").await;
    assert!(e.state.speak_lock);
    assert!(agent_texts(&e)[0].contains("AI named Tinker Tales"));
    let id = e.session_id.clone();

    let e = s.event(&id, json!({"kind": "utterance", "text": "hello"})).await;
    assert!(matches!(e.entries.last().unwrap().record, Record::Suppressed { .. }));
    assert!(e.state.pending.is_empty());

    let (status, body) = s.get(&format!("/api/sessions/{id}/summary")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "SummaryUnavailable");
    let (status, body) = s.get(&format!("/api/sessions/{id}/transcript")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "in-progress");
    assert_eq!(body["turns"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn pause_closes_the_turn_and_wrong_scans_are_redirected() {
    let s = Server::start().await;
    let id = s.create("kid", "generic").await.session_id;
    s.event(&id, json!({"kind": "agent-speech-ended"})).await;
    let before = s.effects(&id, 0).await.next;

    s.event(&id, json!({"kind": "utterance", "text": "Yes!"})).await;
    s.clock.advance(3_000);
    s.app.tick().await;
    assert_eq!(s.effects(&id, before).await.state.transcript.len(), 1);
    s.clock.advance(1_000);
    s.app.tick().await;
    let e = s.effects(&id, before).await;
    assert_eq!(e.state.transcript.len(), 3);
    assert_eq!(agent_texts(&e).len(), 1);

    let e = s.say(&id, "A story about a dragon.").await;
    assert_eq!(e.state.cursor.current, 'D');
    let e = s.say(&id, "The dragon is lost.").await;
    assert_eq!(e.state.phase().to_string(), "characters");
    s.event(&id, json!({"kind": "agent-speech-ended"})).await;
    let e = s.event(&id, json!({"kind": "scan", "payload": "Place:Cave"})).await;
    let last = e.state.transcript.last().unwrap();
    assert_eq!(last.text, REDIRECT_TEXT);
    assert_eq!(last.repair, Some(Repair::Redirect));
    assert_eq!(e.state.cursor.current, 'A');
}

#[tokio::test]
async fn unknown_ids_are_reported() {
    let s = Server::start().await;
    let (status, body) = s.get("/api/sessions/nope/transcript").await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownSession")));
    let (status, body) = s.get("/api/profiles/ghost/stories").await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownProfile")));
    let (status, _) = s.get("/api/stories/missing").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, body) = s.post("/api/sessions/nope/events", json!({"kind": "end-of-speech"})).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownSession")));
    let (status, _) = s
        .post("/api/sessions", json!({"profile_id": "kid", "condition": "mixed"}))
        .await;
    assert!(status.is_client_error());
}

/// Plays a whole session over HTTP as a cooperative child.
async fn play_through(s: &Server, profile: &str, condition: &str) -> String {
    let res = Resources::bundled();
    let mut e = s.create(profile, condition).await;
    let id = e.session_id.clone();
    for _ in 0..400 {
        if e.state.status != SessionStatus::Active {
            break;
        }
        if e.state.speak_lock {
            e = s.event(&id, json!({"kind": "agent-speech-ended"})).await;
        }
        let script = res.scripts.get(e.state.phase(), e.state.condition).unwrap();
        let node = script.node(e.state.cursor.current).unwrap();
        e = match node.expects {
            Expects::Scan(kind) => {
                let payload = pick_token(&e.state, kind, 0);
                s.event(&id, json!({"kind": "scan", "payload": payload})).await
            }
            Expects::Utterance => s.say(&id, "They found a shiny fish.").await,
            Expects::None => panic!("stuck at a silent node"),
        };
    }
    assert_eq!(e.state.status, SessionStatus::Closed, "session did not close");
    id
}

#[tokio::test]
async fn full_session_over_http_is_saved_and_summarized() {
    let s = Server::start().await;
    let id = play_through(&s, "kid", "structured").await;
    let (status, body) = s.post(&format!("/api/sessions/{id}/events"), json!({"kind": "end-of-speech"})).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::CONFLICT, Some("SessionClosed")));

    let (status, list) = s.get("/api/profiles/kid/stories").await;
    assert_eq!(status, StatusCode::OK);
    let stories = list["stories"].as_array().unwrap();
    assert_eq!(stories.len(), 1);
    assert_eq!(stories[0]["stages"].as_array().unwrap().len(), 4);
    let story_id = stories[0]["story_id"].as_str().unwrap();
    let (status, story) = s.get(&format!("/api/stories/{story_id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(story["session_id"], id.as_str());

    let (status, summary) = s.get(&format!("/api/sessions/{id}/summary")).await;
    assert_eq!(status, StatusCode::OK, "{summary}");
    assert_eq!(summary["questions"]["primitive-narrative"], 2);
    assert_eq!(summary["questions"]["chain-narrative"], 2);
    assert_eq!(summary["questions"]["social-awareness"], 4);
    let (_, again) = s.get(&format!("/api/sessions/{id}/summary")).await;
    assert_eq!(summary, again);

    let (_, t) = s.get(&format!("/api/sessions/{id}/transcript")).await;
    assert_eq!(t["status"], "closed");
    for turn in t["turns"].as_array().unwrap() {
        let text = turn["text"].as_str().unwrap();
        assert!(!text.contains("##NEXT##") && !text.contains("##Done##"));
    }
    let e = s.effects(&id, 0).await;
    assert_eq!(e.state.status, SessionStatus::Closed);
}

#[tokio::test]
async fn stories_are_listed_newest_first_per_profile() {
    let s = Server::start().await;
    let first = play_through(&s, "kid", "structured").await;
    s.clock.advance(60_000);
    let second = play_through(&s, "kid", "generic").await;
    play_through(&s, "other", "generic").await;
    let (_, list) = s.get("/api/profiles/kid/stories").await;
    let sessions: Vec<&str> = list["stories"]
        .as_array()
        .unwrap()
        .iter()
        .map(|st| st["session_id"].as_str().unwrap())
        .collect();
    assert_eq!(sessions, [second.as_str(), first.as_str()]);
}

#[tokio::test]
async fn ticker_finalizes_turns_on_its_own() {
    let s = Server::start().await;
    let _ticker = spawn_ticker(s.app.clone(), Duration::from_millis(10));
    let id = s.create("kid", "structured").await.session_id;
    s.event(&id, json!({"kind": "agent-speech-ended"})).await;
    s.event(&id, json!({"kind": "utterance", "text": "Yes!"})).await;
    s.clock.advance(4_000);
    for _ in 0..100 {
        tokio::time::sleep(Duration::from_millis(10)).await;
        if s.effects(&id, 0).await.state.transcript.len() >= 3 {
            return;
        }
    }
    panic!("ticker never closed the turn");
}
