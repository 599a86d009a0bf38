use std::collections::BTreeMap;
use std::io::Write;
use std::net::TcpStream;
use std::time::Duration;

use partsim_core::assets::{build_benchmark, BenchmarkSet, InstanceCounts};
use partsim_core::harness::{episode_dir_name, load_episode, EpisodeConfig};
use partsim_core::policies::PolicyKind;
use partsim_core::protocol::{read_message, write_message, ActPayload, ClientSession, Message, PROTOCOL_VERSION};
use partsim_core::server::Server;

fn set() -> BenchmarkSet {
    let mut counts = BTreeMap::new();
    counts.insert(3, InstanceCounts { instances: 2, inits_per_instance: 2 });
    build_benchmark("served", 8, &counts).unwrap()
}

fn server(config: EpisodeConfig) -> Server {
    Server::bind("127.0.0.1:0", set(), config).unwrap()
}

#[test]
fn observations_describe_the_episode() {
    let srv = server(EpisodeConfig::for_policy(PolicyKind::Remote));
    let addr = srv.local_addr().unwrap();
    let client = std::thread::spawn(move || {
        let session = ClientSession::connect(addr, Some(3), Some(9)).unwrap();
        assert_eq!((session.entry, session.seed, session.steps), (3, 9, 5));
        session
            .run(|obs| ActPayload { hold: Some([obs.step as i64, 0]), push: [45, 45], dir: obs.step as i64 })
            .unwrap()
    });
    let record = srv.serve_one().unwrap();
    let seen = client.join().unwrap();
    assert_eq!(seen.observations.len(), 5);
    for (t, obs) in seen.observations.iter().enumerate() {
        assert_eq!(obs.step, t);
        assert_eq!(obs.steps_remaining, 5 - t);
        assert_eq!(obs.touch_prev.is_some(), t > 0);
        assert_eq!(obs.image().unwrap(), record.steps[t].observation.rgb);
        assert_eq!(obs.memory().unwrap().as_slice().len(), 90 * 90);
    }
    for (t, step) in record.steps.iter().enumerate() {
        assert_eq!(step.action.direction.index() as usize, t);
        assert_eq!(seen.results[t], [step.touch.hold_contact, step.touch.push_contact, step.touch.shear]);
    }
    assert_eq!(seen.metrics, record.final_metrics);
    assert_eq!((record.entry_index, record.master_seed), (3, 9));
    assert_eq!(record.config.policy, PolicyKind::Remote);
}

#[test]
fn disconnect_aborts_only_that_episode() {
    let srv = server(EpisodeConfig::for_policy(PolicyKind::Remote));
    let addr = srv.local_addr().unwrap();
    let quitter = std::thread::spawn(move || {
        let mut s = TcpStream::connect(addr).unwrap();
        write_message(&mut s, &Message::Hello { version: PROTOCOL_VERSION, entry: None, seed: None, steps: None }).unwrap();
        assert_eq!(read_message(&mut s).unwrap().kind(), "hello");
        assert_eq!(read_message(&mut s).unwrap().kind(), "obs");
        drop(s);
    });
    assert!(srv.serve_one().is_err());
    quitter.join().unwrap();

    let ok = std::thread::spawn(move || {
        ClientSession::connect(addr, None, None).unwrap().run(|_| ActPayload { hold: None, push: [0, 0], dir: 0 }).unwrap()
    });
    assert_eq!(srv.serve_one().unwrap().steps.len(), 5);
    assert_eq!(ok.join().unwrap().results.len(), 5);
}

#[test]
fn half_written_frame_times_out() {
    let srv = server(EpisodeConfig::for_policy(PolicyKind::Remote)).with_idle_timeout(Duration::from_millis(200));
    let addr = srv.local_addr().unwrap();
    let client = std::thread::spawn(move || {
        let mut s = TcpStream::connect(addr).unwrap();
        s.write_all(&[0, 0, 0, 40, b'{']).unwrap();
        match read_message(&mut s).unwrap() {
            Message::Error { code, .. } => code,
            other => panic!("{other:?}"),
        }
    });
    assert!(srv.serve_one().is_err());
    assert_eq!(client.join().unwrap(), "timeout");
}

#[test]
fn completed_episodes_are_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let srv = server(EpisodeConfig::for_policy(PolicyKind::Remote)).with_record_dir(tmp.path().to_path_buf());
    let addr = srv.local_addr().unwrap();
    let client = std::thread::spawn(move || {
        ClientSession::connect(addr, Some(1), Some(2)).unwrap().run(|_| ActPayload { hold: None, push: [40, 40], dir: 3 }).unwrap()
    });
    let record = srv.serve_one().unwrap();
    client.join().unwrap();
    assert_eq!(load_episode(&tmp.path().join(episode_dir_name(2, 1))).unwrap(), record);
}

#[test]
fn server_announces_its_own_episode_length() {
    let srv = server(EpisodeConfig::for_policy(PolicyKind::Remote));
    let addr = srv.local_addr().unwrap();
    let client = std::thread::spawn(move || {
        let mut s = TcpStream::connect(addr).unwrap();
        write_message(&mut s, &Message::Hello { version: PROTOCOL_VERSION, entry: None, seed: None, steps: Some(7) }).unwrap();
        read_message(&mut s).unwrap()
    });
    let _ = srv.serve_one();
    let reply = client.join().unwrap();
    assert!(matches!(reply, Message::Hello { steps: Some(5), .. }), "{reply:?}");
}
