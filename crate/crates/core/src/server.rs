//! Environment server: one episode per TCP connection, driven by a remote policy.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use crate::assets::BenchmarkSet;
use crate::harness::{persist_episode, run_episode_with, episode_dir_name, ActionSource, EpisodeConfig, EpisodeRecord};
use crate::memory::flatten;
use crate::metrics::StepMetrics;
use crate::policies::{PolicyInput, PolicyKind};
use crate::protocol::{read_message, touch_bools, write_message, Message, ObsPayload, PROTOCOL_VERSION};
use crate::rng::derive;
use crate::sim::{Action, PartLabelImage, StepOutcome, TouchReading, WorldState};
use crate::{Error, Result};

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(30);

/// Error codes sent in `error` messages.
pub mod codes {
    pub const BAD_ACTION: &str = "bad_action";
    pub const VERSION: &str = "version";
    pub const MALFORMED: &str = "malformed";
    pub const UNEXPECTED: &str = "unexpected";
    pub const UNSUPPORTED: &str = "unsupported";
    pub const TIMEOUT: &str = "timeout";
}

fn is_timeout(e: &Error) -> bool {
    matches!(e, Error::Io(io) if matches!(io.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut))
}

/// Env-side adapter: each action is requested from the peer over the protocol.
pub struct RemotePolicy<'a> {
    stream: &'a mut TcpStream,
    timeout: Duration,
}

impl<'a> RemotePolicy<'a> {
    pub fn new(stream: &'a mut TcpStream, timeout: Duration) -> Self {
        RemotePolicy { stream, timeout }
    }

    /// Report `err` to the peer with `code`; the returned error aborts the episode.
    fn fail(&mut self, code: &str, err: Error) -> Error {
        let _ = write_message(self.stream, &Message::error(code, err.to_string()));
        err
    }
}

impl ActionSource for RemotePolicy<'_> {
    fn next_action(&mut self, input: &PolicyInput, _world: &WorldState, _labels: &PartLabelImage) -> Result<Action> {
        let obs = ObsPayload::new(
            input.step_index,
            &input.observation.rgb,
            &flatten(input.memory),
            input.touch_prev,
            input.steps_total - input.step_index,
        );
        write_message(self.stream, &Message::Obs(obs))?;
        match read_message(self.stream) {
            Ok(Message::Act(act)) => act
                .to_action()
                .map_err(|m| self.fail(codes::BAD_ACTION, Error::Protocol(m))),
            Ok(Message::Reset {}) => Err(self.fail(
                codes::UNSUPPORTED,
                Error::Protocol("one episode per connection; reset is not supported".into()),
            )),
            Ok(other) => Err(self.fail(codes::UNEXPECTED, Error::Protocol(format!("expected act, got {}", other.kind())))),
            Err(e) if is_timeout(&e) => Err(self.fail(codes::TIMEOUT, Error::PolicyTimeout(self.timeout))),
            Err(e @ (Error::Decode(_) | Error::FrameTooLarge(_))) => Err(self.fail(codes::MALFORMED, e)),
            Err(e) => Err(Error::Protocol(format!("connection lost: {e}"))),
        }
    }

    fn observe(&mut self, touch: TouchReading, _outcome: &StepOutcome, done: bool) -> Result<()> {
        write_message(
            self.stream,
            &Message::StepResult {
                touch: touch_bools(touch),
                done,
            },
        )
    }

    fn finish(&mut self, metrics: &StepMetrics) -> Result<()> {
        write_message(self.stream, &Message::EpisodeEnd { metrics: *metrics })
    }
}

pub struct Server {
    listener: TcpListener,
    set: Arc<BenchmarkSet>,
    config: EpisodeConfig,
    idle_timeout: Duration,
    record_dir: Option<PathBuf>,
}

impl Server {
    /// `config.policy` is forced to [`PolicyKind::Remote`].
    pub fn bind(addr: impl ToSocketAddrs, set: BenchmarkSet, config: EpisodeConfig) -> Result<Self> {
        config.validate()?;
        if set.entries.is_empty() {
            return Err(Error::InvalidConfig("benchmark set has no entries".into()));
        }
        Ok(Server {
            listener: TcpListener::bind(addr)?,
            set: Arc::new(set),
            config: EpisodeConfig {
                policy: PolicyKind::Remote,
                ..config
            },
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
            record_dir: None,
        })
    }

    pub fn with_idle_timeout(mut self, timeout: Duration) -> Self {
        self.idle_timeout = timeout;
        self
    }

    /// Persist every completed episode under this directory.
    pub fn with_record_dir(mut self, dir: PathBuf) -> Self {
        self.record_dir = Some(dir);
        self
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accept connections forever, one thread per connection.
    pub fn serve(&self) -> Result<()> {
        for stream in self.listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(_) => continue,
            };
            let handler = self.handler();
            std::thread::spawn(move || {
                let _ = handler.handle(stream);
            });
        }
        Ok(())
    }

    /// Accept one connection and run its episode on this thread.
    pub fn serve_one(&self) -> Result<EpisodeRecord> {
        let (stream, _) = self.listener.accept()?;
        self.handler().handle(stream)
    }

    fn handler(&self) -> Handler {
        Handler {
            set: Arc::clone(&self.set),
            config: self.config.clone(),
            idle_timeout: self.idle_timeout,
            record_dir: self.record_dir.clone(),
        }
    }
}

struct Handler {
    set: Arc<BenchmarkSet>,
    config: EpisodeConfig,
    idle_timeout: Duration,
    record_dir: Option<PathBuf>,
}

impl Handler {
    fn reject(stream: &mut TcpStream, code: &str, err: Error) -> Error {
        let _ = write_message(stream, &Message::error(code, err.to_string()));
        err
    }

    fn handle(&self, mut stream: TcpStream) -> Result<EpisodeRecord> {
        stream.set_read_timeout(Some(self.idle_timeout))?;
        stream.set_nodelay(true)?;
        let (entry, seed) = match read_message(&mut stream) {
            Ok(Message::Hello { version, entry, seed, .. }) => {
                if version != PROTOCOL_VERSION {
                    return Err(Self::reject(
                        &mut stream,
                        codes::VERSION,
                        Error::Protocol(format!("version {version} is not supported; server speaks {PROTOCOL_VERSION}")),
                    ));
                }
                let entry = entry.unwrap_or(0);
                if entry >= self.set.entries.len() {
                    return Err(Self::reject(
                        &mut stream,
                        codes::MALFORMED,
                        Error::Protocol(format!("entry {entry} out of range (set has {})", self.set.entries.len())),
                    ));
                }
                (entry, seed.unwrap_or(0))
            }
            Ok(Message::Reset {}) => {
                return Err(Self::reject(&mut stream, codes::UNSUPPORTED, Error::Protocol("reset before hello".into())))
            }
            Ok(other) => {
                return Err(Self::reject(
                    &mut stream,
                    codes::UNEXPECTED,
                    Error::Protocol(format!("expected hello, got {}", other.kind())),
                ))
            }
            Err(e) if is_timeout(&e) => {
                return Err(Self::reject(&mut stream, codes::TIMEOUT, Error::PolicyTimeout(self.idle_timeout)))
            }
            Err(e @ (Error::Decode(_) | Error::FrameTooLarge(_))) => return Err(Self::reject(&mut stream, codes::MALFORMED, e)),
            Err(e) => return Err(e),
        };
        write_message(
            &mut stream,
            &Message::Hello {
                version: PROTOCOL_VERSION,
                entry: Some(entry),
                seed: Some(seed),
                steps: Some(self.config.episode_length),
            },
        )?;

        let init = &self.set.entries[entry];
        let mut remote = RemotePolicy::new(&mut stream, self.idle_timeout);
        let mut record = run_episode_with(init, &self.config, derive(seed, entry as u64), &mut remote)
            .map_err(|e| Error::InvalidEpisode(e.to_string()))?;
        record.entry_index = entry;
        record.master_seed = seed;
        if let Some(dir) = &self.record_dir {
            persist_episode(&record, &dir.join(episode_dir_name(seed, entry)))?;
        }
        Ok(record)
    }
}
