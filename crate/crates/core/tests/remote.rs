mod common;

use std::collections::VecDeque;
use std::time::Duration;

use ospo_core::backend::{
    Backend, BackendError, ChatMessage, CorruptionParams, DecodeParams, ImageRequest, RemoteBackend, RemoteConfig,
    Simulator,
};
use ospo_core::prompt_forge::{AttrKind, Category, Entity, StructuredPrompt};

use common::{Action, MockServer};

fn client(server: &MockServer, timeout_secs: u64) -> RemoteBackend {
    RemoteBackend::new(RemoteConfig {
        base_url: server.url(),
        timeout_secs,
        max_attempts: 3,
        initial_backoff_ms: 5,
        ..RemoteConfig::default()
    })
    .unwrap()
}

fn hello() -> Vec<ChatMessage> {
    vec![ChatMessage::new("user", "hello")]
}

#[test]
fn persistent_server_errors_exhaust_the_retries() {
    let server = MockServer::start();
    let remote = client(&server, 5);
    server.script("/v1/text", VecDeque::from(vec![Action::Status(503); 3]));
    let err = remote.text_complete(&hello(), 0).unwrap_err();
    assert!(matches!(err, BackendError::Unavailable(_)), "{err}");
    assert_eq!(server.hits("/v1/text"), 3);
}

#[test]
fn slow_replies_time_out() {
    let server = MockServer::start();
    let remote = client(&server, 1);
    server.script("/v1/text", VecDeque::from(vec![Action::Delay(Duration::from_millis(1500)); 3]));
    let err = remote.text_complete(&hello(), 0).unwrap_err();
    assert_eq!(err, BackendError::Timeout { attempts: 3 });
}

#[test]
fn scene_images_cannot_be_sent_to_a_remote_judge() {
    let server = MockServer::start();
    let remote = client(&server, 5);
    let prompt = StructuredPrompt::new(
        Category::Attribute,
        vec![Entity::new("car").with_attr(AttrKind::Color, "red")],
        vec![],
    )
    .unwrap();
    let image = Simulator::builtin()
        .generate_image(&ImageRequest {
            id: "i",
            source_prompt_id: "p",
            prompt: &prompt,
            text: &prompt.surface,
            decode: DecodeParams::default(),
            corruption: CorruptionParams::none(),
        })
        .unwrap();
    let err = remote.vqa_probe(&image, "Is there a car?").unwrap_err();
    assert!(matches!(err, BackendError::InvalidRequest(_)));
    assert_eq!(server.hits("/v1/vqa"), 0);
}

#[test]
fn missing_token_variable_is_reported_up_front() {
    let err = RemoteBackend::new(RemoteConfig {
        auth_token_env: Some("OSPO_TEST_TOKEN_THAT_IS_NOT_SET".into()),
        ..RemoteConfig::default()
    })
    .err()
    .unwrap();
    assert!(matches!(err, BackendError::Unavailable(_)));
}
