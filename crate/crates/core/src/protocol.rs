//! Length-framed JSON messages between the environment server and remote
//! policies. A frame is a 4-byte big-endian body length followed by one
//! UTF-8 JSON object whose `type` field names the message.

use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::geom::{Direction, Pixel};
use crate::grid::{decode_png, encode_png, LabelImage, PngKind, RgbImage};
use crate::metrics::StepMetrics;
use crate::sim::{Action, TouchReading};
use crate::{Error, Result, IMAGE_SIZE};

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_FRAME: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsPayload {
    pub step: usize,
    pub image_png_b64: String,
    /// Flattened part memory, 0 background and `c + 1` for channel `c`.
    pub memory_png_b64: String,
    pub touch_prev: Option<[bool; 3]>,
    pub steps_remaining: usize,
}

impl ObsPayload {
    pub fn new(step: usize, image: &RgbImage, memory: &LabelImage, touch_prev: Option<TouchReading>, steps_remaining: usize) -> Self {
        ObsPayload {
            step,
            image_png_b64: B64.encode(encode_png(image.as_slice(), PngKind::Rgb)),
            memory_png_b64: B64.encode(encode_png(memory.as_slice(), PngKind::Gray)),
            touch_prev: touch_prev.map(touch_bools),
            steps_remaining,
        }
    }

    pub fn image(&self) -> Result<RgbImage> {
        let bytes = B64.decode(&self.image_png_b64).map_err(|e| Error::Decode(e.to_string()))?;
        RgbImage::from_vec(decode_png(&bytes, PngKind::Rgb)?)
    }

    pub fn memory(&self) -> Result<LabelImage> {
        let bytes = B64.decode(&self.memory_png_b64).map_err(|e| Error::Decode(e.to_string()))?;
        LabelImage::from_vec(decode_png(&bytes, PngKind::Gray)?)
    }
}

/// Action as sent on the wire. Fields are wide so out-of-range values decode
/// and are rejected by [`ActPayload::to_action`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActPayload {
    pub hold: Option<[i64; 2]>,
    pub push: [i64; 2],
    pub dir: i64,
}

fn wire_pixel(p: [i64; 2]) -> std::result::Result<Pixel, String> {
    let ok = |v: i64| (0..IMAGE_SIZE as i64).contains(&v);
    if ok(p[0]) && ok(p[1]) {
        Ok(Pixel::new(p[0] as usize, p[1] as usize))
    } else {
        Err(format!("pixel {p:?} is outside the {IMAGE_SIZE}x{IMAGE_SIZE} frame"))
    }
}

impl ActPayload {
    pub fn from_action(a: &Action) -> Self {
        let px = |p: Pixel| [p.row as i64, p.col as i64];
        ActPayload {
            hold: a.hold.map(px),
            push: px(a.push),
            dir: i64::from(a.direction.index()),
        }
    }

    pub fn to_action(&self) -> std::result::Result<Action, String> {
        let direction = u8::try_from(self.dir)
            .ok()
            .and_then(Direction::new)
            .ok_or_else(|| format!("direction {} is not in 0..=7", self.dir))?;
        Ok(Action {
            hold: self.hold.map(wire_pixel).transpose()?,
            push: wire_pixel(self.push)?,
            direction,
        })
    }
}

pub fn touch_bools(t: TouchReading) -> [bool; 3] {
    [t.hold_contact, t.push_contact, t.shear]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        version: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        entry: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        steps: Option<usize>,
    },
    Reset {},
    Obs(ObsPayload),
    Act(ActPayload),
    StepResult {
        touch: [bool; 3],
        done: bool,
    },
    EpisodeEnd {
        metrics: StepMetrics,
    },
    Error {
        code: String,
        message: String,
    },
}

impl Message {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        Message::Error {
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::Reset {} => "reset",
            Message::Obs(_) => "obs",
            Message::Act(_) => "act",
            Message::StepResult { .. } => "step_result",
            Message::EpisodeEnd { .. } => "episode_end",
            Message::Error { .. } => "error",
        }
    }
}

pub fn encode(msg: &Message) -> Vec<u8> {
    let body = serde_json::to_vec(msg).expect("messages serialize");
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

/// Decode one complete frame.
pub fn decode(frame: &[u8]) -> Result<Message> {
    if frame.len() < 4 {
        return Err(Error::Decode("frame shorter than its length prefix".into()));
    }
    let len = u32::from_be_bytes(frame[..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_FRAME {
        return Err(Error::FrameTooLarge(len));
    }
    let body = &frame[4..];
    if body.len() != len {
        return Err(Error::Decode(format!("frame declares {len} bytes but carries {}", body.len())));
    }
    decode_body(body)
}

fn decode_body(body: &[u8]) -> Result<Message> {
    serde_json::from_slice(body).map_err(|e| Error::Decode(e.to_string()))
}

pub fn write_message(w: &mut impl Write, msg: &Message) -> Result<()> {
    w.write_all(&encode(msg))?;
    w.flush()?;
    Ok(())
}

/// Read one frame. I/O failures surface as [`Error::Io`]; bad bodies as
/// [`Error::Decode`].
pub fn read_message(r: &mut impl Read) -> Result<Message> {
    let mut head = [0u8; 4];
    r.read_exact(&mut head)?;
    let len = u32::from_be_bytes(head) as usize;
    if len > MAX_FRAME {
        return Err(Error::FrameTooLarge(len));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    decode_body(&body)
}

/// Client side of one episode, for tests and Rust-side remote policies.
pub struct ClientSession {
    stream: TcpStream,
    pub entry: usize,
    pub seed: u64,
    pub steps: usize,
}

/// What the client learned from a finished episode.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientEpisode {
    pub observations: Vec<ObsPayload>,
    pub results: Vec<[bool; 3]>,
    pub metrics: StepMetrics,
}

impl ClientSession {
    pub fn connect(addr: impl ToSocketAddrs, entry: Option<usize>, seed: Option<u64>) -> Result<Self> {
        let mut stream = TcpStream::connect(addr)?;
        stream.set_read_timeout(Some(Duration::from_secs(60)))?;
        write_message(
            &mut stream,
            &Message::Hello {
                version: PROTOCOL_VERSION,
                entry,
                seed,
                steps: None,
            },
        )?;
        match read_message(&mut stream)? {
            Message::Hello {
                entry: Some(entry),
                seed: Some(seed),
                steps: Some(steps),
                ..
            } => Ok(ClientSession {
                stream,
                entry,
                seed,
                steps,
            }),
            Message::Error { code, message } => Err(Error::Protocol(format!("{code}: {message}"))),
            other => Err(Error::Protocol(format!("expected hello, got {}", other.kind()))),
        }
    }

    /// Drive the episode to its end with `policy`.
    pub fn run(mut self, mut policy: impl FnMut(&ObsPayload) -> ActPayload) -> Result<ClientEpisode> {
        let mut observations = Vec::new();
        let mut results = Vec::new();
        loop {
            match read_message(&mut self.stream)? {
                Message::Obs(obs) => {
                    let act = policy(&obs);
                    observations.push(obs);
                    write_message(&mut self.stream, &Message::Act(act))?;
                    match read_message(&mut self.stream)? {
                        Message::StepResult { touch, .. } => results.push(touch),
                        Message::Error { code, message } => return Err(Error::Protocol(format!("{code}: {message}"))),
                        other => return Err(Error::Protocol(format!("expected step_result, got {}", other.kind()))),
                    }
                }
                Message::EpisodeEnd { metrics } => {
                    return Ok(ClientEpisode {
                        observations,
                        results,
                        metrics,
                    })
                }
                Message::Error { code, message } => return Err(Error::Protocol(format!("{code}: {message}"))),
                other => return Err(Error::Protocol(format!("unexpected {}", other.kind()))),
            }
        }
    }

    pub fn stream(&mut self) -> &mut TcpStream {
        &mut self.stream
    }
}
