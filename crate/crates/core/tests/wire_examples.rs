use partsim_core::geom::{Direction, Pixel};
use partsim_core::metrics::StepMetrics;
use partsim_core::protocol::{decode, encode, ActPayload, Message};
use partsim_core::sim::Action;

fn framed(json: &str) -> Vec<u8> {
    let mut out = (json.len() as u32).to_be_bytes().to_vec();
    out.extend_from_slice(json.as_bytes());
    out
}

fn check(msg: Message, json: &str, len: u32) {
    let bytes = encode(&msg);
    assert_eq!(bytes, framed(json));
    assert_eq!(bytes[..4], len.to_be_bytes());
    assert_eq!(decode(&bytes).unwrap(), msg);
}

#[test]
fn documented_frames_match_the_encoder() {
    check(Message::Reset {}, r#"{"type":"reset"}"#, 0x10);
    check(
        Message::Hello { version: 1, entry: Some(3), seed: Some(9), steps: None },
        r#"{"type":"hello","version":1,"entry":3,"seed":9}"#,
        0x2f,
    );
    check(
        Message::Hello { version: 1, entry: Some(3), seed: Some(9), steps: Some(5) },
        r#"{"type":"hello","version":1,"entry":3,"seed":9,"steps":5}"#,
        0x39,
    );
    let act = Action {
        hold: Some(Pixel::new(41, 30)),
        push: Pixel::new(52, 61),
        direction: Direction::new(2).unwrap(),
    };
    check(Message::Act(ActPayload::from_action(&act)), r#"{"type":"act","hold":[41,30],"push":[52,61],"dir":2}"#, 0x34);
    check(
        Message::Act(ActPayload { hold: None, push: [52, 61], dir: 6 }),
        r#"{"type":"act","hold":null,"push":[52,61],"dir":6}"#,
        0x31,
    );
    check(
        Message::StepResult { touch: [true, true, false], done: false },
        r#"{"type":"step_result","touch":[true,true,false],"done":false}"#,
        0x3d,
    );
    check(
        Message::EpisodeEnd {
            metrics: StepMetrics { ape: 0.0, hausdorff95: 1.0, part_iou: 0.9712, effective: true, optimal: true },
        },
        r#"{"type":"episode_end","metrics":{"ape":0.0,"hausdorff95":1.0,"part_iou":0.9712,"effective":true,"optimal":true}}"#,
        112,
    );
    let bad = ActPayload { hold: None, push: [1, 1], dir: 8 }.to_action().unwrap_err();
    let message = partsim_core::Error::Protocol(bad).to_string();
    check(
        Message::error("bad_action", message),
        r#"{"type":"error","code":"bad_action","message":"protocol error: direction 8 is not in 0..=7"}"#,
        0x5c,
    );
}

#[test]
fn hello_defaults_and_client_steps() {
    let m = decode(&framed(r#"{"type":"hello","version":1}"#)).unwrap();
    assert_eq!(m, Message::Hello { version: 1, entry: None, seed: None, steps: None });
    assert!(decode(&framed(r#"{"type":"act","push":[1,1]}"#)).is_err());
}
