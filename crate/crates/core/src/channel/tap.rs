use std::sync::RwLock;

use super::dataset::EavesdropDataset;
use super::wire::{deserialize, serialize};
use crate::error::{Error, Result};
use crate::tensor::ActivationTensor;

/// Substitution applied by an active tap.
pub type Transform<'a> = Box<dyn Fn(&ActivationTensor<f32>) -> Result<ActivationTensor<f32>> + Send + Sync + 'a>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TapMode {
    Passive,
    Active,
}

/// Observer on the single device-to-server hop.
///
/// Every frame that crosses is decoded and a copy appended to the log, so
/// later mutation of the caller's tensors cannot alter what was recorded.
pub struct ChannelTap<'a> {
    mode: TapMode,
    transform: Option<Transform<'a>>,
    log: RwLock<Vec<ActivationTensor<f32>>>,
}

impl std::fmt::Debug for ChannelTap<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChannelTap")
            .field("mode", &self.mode)
            .field("logged", &self.log_len())
            .finish()
    }
}

impl<'a> ChannelTap<'a> {
    pub fn passive() -> Self {
        Self {
            mode: TapMode::Passive,
            transform: None,
            log: RwLock::new(Vec::new()),
        }
    }

    pub fn active<F>(transform: F) -> Self
    where
        F: Fn(&ActivationTensor<f32>) -> Result<ActivationTensor<f32>> + Send + Sync + 'a,
    {
        Self {
            mode: TapMode::Active,
            transform: Some(Box::new(transform)),
            log: RwLock::new(Vec::new()),
        }
    }

    pub fn mode(&self) -> TapMode {
        self.mode
    }

    /// Wire-level relay: takes the device's frame and returns the frame the
    /// server receives. Passive taps return the input bytes verbatim.
    pub fn relay(&self, frame: &[u8]) -> Result<Vec<u8>> {
        let h = deserialize(frame)?;
        let out = match (&self.mode, &self.transform) {
            (TapMode::Active, Some(transform)) => {
                let replaced = transform(&h)?;
                if replaced.shape() != h.shape() {
                    return Err(Error::ChannelIntegrity(format!(
                        "transform changed shape {} -> {}",
                        h.shape(),
                        replaced.shape()
                    )));
                }
                Some(serialize(&replaced)?)
            }
            _ => None,
        };
        self.log.write().expect("tap log poisoned").push(h);
        Ok(out.unwrap_or_else(|| frame.to_vec()))
    }

    /// Sends `h` across the channel and returns what the server decodes.
    /// The server knows its own cut, so the sender's source layer is kept.
    pub fn transmit(&self, h: &ActivationTensor<f32>) -> Result<ActivationTensor<f32>> {
        let received = deserialize(&self.relay(&serialize(h)?)?)?;
        Ok(match h.source_layer() {
            Some(layer) => received.with_source_layer(layer),
            None => received,
        })
    }

    pub fn log_len(&self) -> usize {
        self.log.read().expect("tap log poisoned").len()
    }

    pub fn logged(&self) -> Vec<ActivationTensor<f32>> {
        self.log.read().expect("tap log poisoned").clone()
    }

    /// The first `n` logged activations as the attacker's dataset.
    pub fn collect(&self, n: usize) -> Result<EavesdropDataset<f32>> {
        if self.mode != TapMode::Passive {
            return Err(Error::Precondition("collection requires a passive tap".into()));
        }
        let log = self.log.read().expect("tap log poisoned");
        if n > log.len() {
            return Err(Error::InsufficientData {
                requested: n,
                available: log.len(),
            });
        }
        EavesdropDataset::from_frames(log[..n].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    fn h(v: f32) -> ActivationTensor<f32> {
        ActivationTensor::new(Shape::hwc(2, 1, 2), vec![v, v + 1.0, v + 2.0, v + 3.0]).unwrap()
    }

    #[test]
    fn passive_passes_through_and_logs() {
        let tap = ChannelTap::passive();
        let x = h(1.0).with_source_layer(4);
        assert_eq!(tap.transmit(&x).unwrap(), x);
        assert_eq!(tap.log_len(), 1);
        assert_eq!(tap.logged()[0].source_layer(), None);
        let bytes = serialize(&x).unwrap();
        assert_eq!(tap.relay(&bytes).unwrap(), bytes);
    }

    #[test]
    fn active_identity_and_substitution() {
        let tap = ChannelTap::active(|x| Ok(x.clone()));
        assert_eq!(tap.transmit(&h(2.0)).unwrap(), h(2.0));
        let tap = ChannelTap::active(|_| Ok(h(9.0)));
        assert_eq!(tap.transmit(&h(2.0)).unwrap(), h(9.0));
        assert_eq!(tap.logged(), vec![h(2.0)]);
    }

    #[test]
    fn shape_changing_transform_is_an_integrity_error() {
        let tap = ChannelTap::active(|_| Ok(ActivationTensor::zeros(Shape::hwc(1, 1, 1))));
        assert!(matches!(tap.transmit(&h(0.0)), Err(Error::ChannelIntegrity(_))));
    }

    #[test]
    fn collect_bounds() {
        let tap = ChannelTap::passive();
        for i in 0..5 {
            tap.transmit(&h(i as f32)).unwrap();
        }
        let d = tap.collect(3).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.samples()[2], h(2.0));
        assert!(tap.collect(0).unwrap().is_empty());
        assert!(matches!(tap.collect(6), Err(Error::InsufficientData { .. })));
        let active = ChannelTap::active(|x| Ok(x.clone()));
        assert!(active.collect(0).is_err());
    }

    #[test]
    fn concurrent_transmits_all_logged() {
        let tap = std::sync::Arc::new(ChannelTap::passive());
        let handles: Vec<_> = (0..4)
            .map(|t| {
                let tap = tap.clone();
                std::thread::spawn(move || {
                    for i in 0..25 {
                        tap.transmit(&h((t * 100 + i) as f32)).unwrap();
                    }
                })
            })
            .collect();
        for j in handles {
            j.join().unwrap();
        }
        assert_eq!(tap.log_len(), 100);
    }
}
