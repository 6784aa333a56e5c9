use std::collections::{BTreeMap, VecDeque};
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Channel, RfError, WireFrame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MediumConfig {
    pub loss_probability: f64,
    pub latency_ticks: u64,
    pub seed: u64,
}

impl Default for MediumConfig {
    fn default() -> Self {
        Self { loss_probability: 0.0, latency_ticks: 0, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RadioId(pub u32);

/// A transceiver tuned to one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Radio {
    pub id: RadioId,
    pub channel: Channel,
}

impl Radio {
    pub fn tune(&mut self, channel: Channel) {
        self.channel = channel;
    }
}

/// One transmitted frame as written to a capture file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptureRecord {
    pub tick: u32,
    pub channel: u8,
    pub frame: WireFrame,
}

#[derive(Debug, Clone)]
struct InFlight {
    due: u64,
    origin: RadioId,
    frame: WireFrame,
}

/// Shared air. Loss is decided at send time from the seeded generator, so a
/// fixed seed and send schedule always produce the same deliveries.
#[derive(Debug, Clone)]
pub struct Medium {
    config: MediumConfig,
    rng: ChaCha8Rng,
    queues: BTreeMap<Channel, VecDeque<InFlight>>,
    capture: Option<Vec<CaptureRecord>>,
    sent: u64,
    dropped: u64,
}

impl Medium {
    pub fn new(config: MediumConfig) -> Self {
        Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            queues: BTreeMap::new(),
            capture: None,
            sent: 0,
            dropped: 0,
        }
    }

    /// Starts recording every transmission (including ones later lost).
    pub fn enable_capture(&mut self) {
        self.capture.get_or_insert_with(Vec::new);
    }

    pub fn capture(&self) -> &[CaptureRecord] {
        self.capture.as_deref().unwrap_or(&[])
    }

    pub fn config(&self) -> &MediumConfig {
        &self.config
    }

    /// `(sent, dropped)` frame counters.
    pub fn stats(&self) -> (u64, u64) {
        (self.sent, self.dropped)
    }

    pub fn send(&mut self, origin: RadioId, channel: Channel, frame: WireFrame, tick: u64) {
        self.sent += 1;
        if let Some(cap) = self.capture.as_mut() {
            cap.push(CaptureRecord { tick: tick as u32, channel: channel.index(), frame: frame.clone() });
        }
        let roll: f64 = self.rng.gen();
        if roll < self.config.loss_probability {
            self.dropped += 1;
            return;
        }
        let due = tick + self.config.latency_ticks;
        self.queues.entry(channel).or_default().push_back(InFlight { due, origin, frame });
    }

    /// Frames due by `tick` on the radio's channel from other radios, in
    /// send order. Returned frames leave the queue.
    pub fn poll(&mut self, radio: &Radio, tick: u64) -> Vec<WireFrame> {
        let Some(queue) = self.queues.get_mut(&radio.channel) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        queue.retain(|f| {
            if f.due <= tick && f.origin != radio.id {
                out.push(f.frame.clone());
                false
            } else {
                true
            }
        });
        out
    }

    pub fn in_flight(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }
}

/// Writes capture records as `tick: u32 BE, channel: u8, frame bytes`.
pub fn write_capture<W: Write>(records: &[CaptureRecord], mut out: W) -> io::Result<()> {
    for r in records {
        out.write_all(&r.tick.to_be_bytes())?;
        out.write_all(&[r.channel])?;
        out.write_all(r.frame.as_bytes())?;
    }
    Ok(())
}

/// Parses a capture stream; frame boundaries come from each frame's length byte.
pub fn read_capture(mut bytes: &[u8]) -> Result<Vec<CaptureRecord>, RfError> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < 5 + 5 {
            return Err(RfError::TruncatedCapture);
        }
        let tick = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
        let channel = bytes[4];
        let frame_len = 5 + bytes[9] as usize + 2;
        if bytes.len() < 5 + frame_len {
            return Err(RfError::TruncatedCapture);
        }
        let frame = WireFrame::from_bytes(bytes[5..5 + frame_len].to_vec());
        out.push(CaptureRecord { tick, channel, frame });
        bytes = &bytes[5 + frame_len..];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rfnet::{decode, encode, Message};
    use proptest::prelude::*;

    fn radio(id: u32, ch: u32) -> Radio {
        Radio { id: RadioId(id), channel: Channel::new(ch).unwrap() }
    }

    fn ack(v: u8) -> WireFrame {
        encode(&Message::Ack { vehicle: v }).unwrap()
    }

    #[test]
    fn empty_medium_polls_nothing() {
        let mut m = Medium::new(MediumConfig::default());
        assert!(m.poll(&radio(1, 0), 10).is_empty());
    }

    #[test]
    fn lossless_zero_latency_same_tick() {
        let mut m = Medium::new(MediumConfig::default());
        let (hub, veh) = (radio(1000, 3), radio(3, 3));
        m.send(hub.id, hub.channel, ack(3), 5);
        assert!(m.poll(&hub, 5).is_empty(), "no self-reception");
        assert_eq!(m.poll(&veh, 5), vec![ack(3)]);
        assert!(m.poll(&veh, 5).is_empty());
    }

    #[test]
    fn total_loss_delivers_nothing() {
        let mut m = Medium::new(MediumConfig { loss_probability: 1.0, ..MediumConfig::default() });
        for t in 0..50 {
            m.send(RadioId(9), Channel::new(0).unwrap(), ack(0), t);
        }
        assert!(m.poll(&radio(0, 0), 1000).is_empty());
        assert_eq!(m.stats(), (50, 50));
    }

    #[test]
    fn latency_and_fifo_order() {
        let mut m = Medium::new(MediumConfig { latency_ticks: 1, ..MediumConfig::default() });
        let ch = Channel::new(2).unwrap();
        m.send(RadioId(9), ch, ack(1), 1);
        m.send(RadioId(9), ch, ack(2), 2);
        let rx = radio(2, 2);
        assert_eq!(m.poll(&rx, 2), vec![ack(1)]);
        m.send(RadioId(9), ch, ack(3), 2);
        assert_eq!(m.poll(&rx, 3), vec![ack(2), ack(3)]);
    }

    #[test]
    fn channels_are_isolated() {
        let mut m = Medium::new(MediumConfig::default());
        m.send(RadioId(9), Channel::new(3).unwrap(), ack(3), 0);
        let mut r = radio(4, 4);
        assert!(m.poll(&r, 100).is_empty());
        r.tune(Channel::new(3).unwrap());
        assert_eq!(m.poll(&r, 100).len(), 1);
    }

    #[test]
    fn seeded_loss_replays() {
        let pattern = |seed| {
            let mut m = Medium::new(MediumConfig { loss_probability: 0.5, latency_ticks: 0, seed });
            let rx = radio(0, 0);
            (0..200)
                .map(|t| {
                    m.send(RadioId(1), rx.channel, ack(0), t);
                    !m.poll(&rx, t).is_empty()
                })
                .collect::<Vec<_>>()
        };
        let a = pattern(42);
        assert_eq!(a, pattern(42));
        let delivered = a.iter().filter(|d| **d).count();
        assert!((60..140).contains(&delivered), "delivered {delivered}");
    }

    #[test]
    fn capture_round_trip() {
        let mut m = Medium::new(MediumConfig { loss_probability: 1.0, ..MediumConfig::default() });
        m.enable_capture();
        m.send(RadioId(1), Channel::new(7).unwrap(), ack(7), 300);
        m.send(RadioId(1), Channel::new(2).unwrap(), encode(&Message::Activate { vehicle: 2 }).unwrap(), 301);
        let mut buf = Vec::new();
        write_capture(m.capture(), &mut buf).unwrap();
        assert_eq!(&buf[..5], &[0, 0, 1, 44, 7]);
        let back = read_capture(&buf).unwrap();
        assert_eq!(back, m.capture());
        assert_eq!(decode(back[1].frame.as_bytes()).unwrap(), Message::Activate { vehicle: 2 });
        assert_eq!(read_capture(&buf[..buf.len() - 1]), Err(RfError::TruncatedCapture));
    }

    proptest! {
        #[test]
        fn frames_only_reach_their_channel(
            sends in proptest::collection::vec((0u32..6, 0u8..6, 0u64..20), 0..60),
            loss in 0.0f64..0.5,
            latency in 0u64..4,
        ) {
            let mut m = Medium::new(MediumConfig { loss_probability: loss, latency_ticks: latency, seed: 3 });
            for (origin, ch, tick) in &sends {
                let frame = encode(&Message::Ack { vehicle: *ch }).unwrap();
                m.send(RadioId(100 + origin), Channel::new(*ch as u32).unwrap(), frame, *tick);
            }
            for ch in 0..6u32 {
                let r = radio(ch, ch);
                for f in m.poll(&r, 1_000) {
                    prop_assert_eq!(decode(f.as_bytes()).unwrap().vehicle() as u32, ch);
                }
            }
            prop_assert_eq!(m.in_flight(), 0);
        }
    }
}
