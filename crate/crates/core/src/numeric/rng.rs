use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named random substreams. Each one is an independent ChaCha stream keyed
/// by the master seed, so draws from one never shift another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stream {
    WeightInit = 1,
    DataShuffle = 2,
    Noise = 3,
    Dropout = 4,
    ClassOrder = 5,
}

#[derive(Debug, Clone)]
pub struct RngStreams {
    master_seed: u64,
    weight_init: ChaCha8Rng,
    data_shuffle: ChaCha8Rng,
    noise: ChaCha8Rng,
    dropout: ChaCha8Rng,
    class_order: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            weight_init: substream(master_seed, Stream::WeightInit, 0),
            data_shuffle: substream(master_seed, Stream::DataShuffle, 0),
            noise: substream(master_seed, Stream::Noise, 0),
            dropout: substream(master_seed, Stream::Dropout, 0),
            class_order: substream(master_seed, Stream::ClassOrder, 0),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn get(&mut self, stream: Stream) -> &mut ChaCha8Rng {
        match stream {
            Stream::WeightInit => &mut self.weight_init,
            Stream::DataShuffle => &mut self.data_shuffle,
            Stream::Noise => &mut self.noise,
            Stream::Dropout => &mut self.dropout,
            Stream::ClassOrder => &mut self.class_order,
        }
    }

    pub fn weight_init(&mut self) -> &mut ChaCha8Rng {
        &mut self.weight_init
    }

    pub fn data_shuffle(&mut self) -> &mut ChaCha8Rng {
        &mut self.data_shuffle
    }

    pub fn noise(&mut self) -> &mut ChaCha8Rng {
        &mut self.noise
    }

    pub fn dropout(&mut self) -> &mut ChaCha8Rng {
        &mut self.dropout
    }

    pub fn class_order(&mut self) -> &mut ChaCha8Rng {
        &mut self.class_order
    }

    /// Fresh set of streams for a sub-run (e.g. one task), independent of how
    /// much the parent streams have been consumed.
    pub fn fork(&self, salt: u64) -> Self {
        let seed = self
            .master_seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(salt.wrapping_mul(0xBF58_476D_1CE4_E5B9))
            ^ 0x94D0_49BB_1331_11EB;
        Self::new(seed)
    }
}

fn substream(master: u64, stream: Stream, word: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream as u64);
    rng.set_word_pos(word as u128);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn substreams_are_isolated() {
        let mut a = RngStreams::new(7);
        let mut b = RngStreams::new(7);
        for _ in 0..100 {
            let _: u64 = a.noise().random();
        }
        let x: Vec<u64> = (0..8).map(|_| a.data_shuffle().random()).collect();
        let y: Vec<u64> = (0..8).map(|_| b.data_shuffle().random()).collect();
        assert_eq!(x, y);
    }

    #[test]
    fn streams_differ_from_each_other() {
        let mut a = RngStreams::new(7);
        let x: u64 = a.noise().random();
        let y: u64 = a.dropout().random();
        assert_ne!(x, y);
    }

    #[test]
    fn fork_is_deterministic() {
        let mut a = RngStreams::new(3).fork(2);
        let mut b = RngStreams::new(3).fork(2);
        let mut c = RngStreams::new(3).fork(3);
        let x: u64 = a.weight_init().random();
        assert_eq!(x, b.weight_init().random::<u64>());
        assert_ne!(x, c.weight_init().random::<u64>());
    }
}
