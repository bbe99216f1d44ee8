//! Training samples from observed frames and per-epoch shuffled batches.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{to_signed, Dims, VideoError, VideoTensor};
use crate::flow::{normalized_for_observed, FlowSequence};
use crate::objective::SampleBatch;

/// Every pixel of every observed frame with its normalized coordinate,
/// signed target and normalized flow.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    dims: Dims,
    observed: Vec<usize>,
    coords: Vec<[f64; 3]>,
    targets: Vec<[f64; 3]>,
    flows: Vec<[f64; 3]>,
}

impl TrainingSet {
    pub fn new(video: &VideoTensor, flows: &FlowSequence) -> Result<Self, VideoError> {
        let dims = video.dims();
        let observed = video.observed_indices();
        let normalized = normalized_for_observed(video, flows)?;
        let n = observed.len() * dims.width * dims.height;
        let mut set = Self {
            dims,
            observed: observed.clone(),
            coords: Vec::with_capacity(n),
            targets: Vec::with_capacity(n),
            flows: Vec::with_capacity(n),
        };
        for &k in &observed {
            let frame = video.frame(k);
            let frame_flows = &normalized[&k];
            for y in 0..dims.height {
                for x in 0..dims.width {
                    let i = y * dims.width + x;
                    set.coords.push(dims.coord(x, y, k as f64));
                    set.targets.push(frame.pixels()[i].map(to_signed));
                    set.flows.push(frame_flows[i]);
                }
            }
        }
        Ok(set)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn observed_frames(&self) -> &[usize] {
        &self.observed
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[[f64; 3]] {
        &self.coords
    }

    pub fn flows(&self) -> &[[f64; 3]] {
        &self.flows
    }

    /// All samples as one batch, in storage order.
    pub fn full_batch(&self) -> SampleBatch {
        self.batch_of(&(0..self.len()).collect::<Vec<_>>())
    }

    fn batch_of(&self, idx: &[usize]) -> SampleBatch {
        SampleBatch::new(
            idx.iter().map(|&i| self.coords[i]).collect(),
            Some(idx.iter().map(|&i| self.targets[i]).collect()),
            Some(idx.iter().map(|&i| self.flows[i]).collect()),
        )
        .expect("training set invariants")
    }
}

/// One epoch: a shuffled partition of all observed samples. The last
/// batch may be short.
pub fn make_batches<R: Rng + ?Sized>(set: &TrainingSet, batch_size: usize, rng: &mut R) -> Vec<SampleBatch> {
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(rng);
    let size = if batch_size > set.len() {
        log::warn!(
            "batch size {batch_size} exceeds {} samples; using one full batch",
            set.len()
        );
        set.len().max(1)
    } else {
        batch_size.max(1)
    };
    order.chunks(size).map(|idx| set.batch_of(idx)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{FlowGrid, FlowSequence};
    use crate::video::{CoordMap, Frame};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn video(frames: usize, w: usize, h: usize) -> VideoTensor {
        let fs = (0..frames).map(|k| Frame::filled(w, h, [k as f64 / frames as f64; 3])).collect();
        VideoTensor::new(fs).unwrap().with_split(2).unwrap()
    }

    fn zero_flows(v: &VideoTensor) -> FlowSequence {
        let d = v.dims();
        let mut s = FlowSequence::new(1);
        for k in 0..d.frames {
            s.grids.insert(k, FlowGrid::constant(d.width, d.height, 0.0, 0.0));
        }
        s
    }

    #[test]
    fn partition_arithmetic() {
        let v = video(3, 4, 4);
        let set = TrainingSet::new(&v, &zero_flows(&v)).unwrap();
        assert_eq!(set.len(), 32);
        let batches = make_batches(&set, 8, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(batches.len(), 4);
        let seen: HashSet<_> = batches
            .iter()
            .flat_map(|b| b.coords().iter().map(|c| c.map(f64::to_bits)))
            .collect();
        assert_eq!(seen.len(), 32);
    }

    #[test]
    fn same_seed_same_batches() {
        let v = video(5, 3, 3);
        let set = TrainingSet::new(&v, &zero_flows(&v)).unwrap();
        let a = make_batches(&set, 5, &mut ChaCha8Rng::seed_from_u64(4));
        let b = make_batches(&set, 5, &mut ChaCha8Rng::seed_from_u64(4));
        let c = make_batches(&set, 5, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn oversize_batch_is_single() {
        let v = video(3, 2, 2);
        let set = TrainingSet::new(&v, &zero_flows(&v)).unwrap();
        let b = make_batches(&set, 1000, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].len(), 8);
    }

    #[test]
    fn no_held_out_time_is_ever_sampled() {
        let v = video(9, 5, 4);
        let set = TrainingSet::new(&v, &zero_flows(&v)).unwrap();
        let tmap = CoordMap::new(9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            for b in make_batches(&set, 7, &mut rng) {
                for c in b.coords() {
                    assert_eq!(tmap.nearest_index(c[2]) % 2, 0);
                }
            }
        }
    }

    #[test]
    fn targets_are_signed() {
        let v = VideoTensor::new(vec![Frame::filled(2, 2, [1.0, 0.0, 0.5]); 3]).unwrap().with_split(2).unwrap();
        let set = TrainingSet::new(&v, &zero_flows(&v)).unwrap();
        let b = set.full_batch();
        assert_eq!(b.targets().unwrap()[0], [1.0, -1.0, 0.0]);
        assert_eq!(b.flows().unwrap()[0], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn missing_flow_is_an_error() {
        let v = video(3, 2, 2);
        let mut flows = zero_flows(&v);
        flows.grids.remove(&2);
        assert!(TrainingSet::new(&v, &flows).is_err());
    }
}
