use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::whirlpool::PoolKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolPlan {
    pub pool: PoolKind,
    /// Total mixes in the pool, genesis mixes included.
    pub mixes: usize,
    pub genesis: usize,
}

/// Everything that determines a generated chain. Two runs with equal plans
/// produce byte-identical feeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioPlan {
    pub seed: u64,
    pub start_time: i64,
    pub start_height: u64,
    pub block_interval_secs: i64,
    pub txs_per_block: u32,
    /// Ordinary wallets; a fifth of them use non-segwit scripts.
    pub users: usize,
    pub exchanges: usize,

    /// Regular Wasabi rounds; planted rounds below come on top.
    pub wasabi_mixes: usize,
    pub wasabi_min_peers: usize,
    pub wasabi_max_peers: usize,
    pub remix_probability: f64,
    /// Rounds built from fresh coins only.
    pub standalone_wasabi: usize,
    /// Round-like transactions that each break exactly one WCDH clause,
    /// cycling through the four clauses.
    pub wasabi_near_misses: usize,

    pub whirlpool: Vec<PoolPlan>,
    /// 5-in/5-out lookalikes that break the mix shape.
    pub whirlpool_near_misses: usize,
    /// Shape-matching mixes with no remix input and out-of-band premix.
    pub zero_remix_plants: usize,

    pub background_payments: usize,
    pub batch_payouts: usize,
    /// Payments spending a mixed coin.
    pub exits: usize,

    pub star_plants: usize,
    pub star_fan_in: usize,
    pub collector_plants: usize,
    pub collector_fan_out: usize,
    pub exchange_direct_plants: usize,
    pub exchange_indirect_plants: usize,
}

impl Default for ScenarioPlan {
    fn default() -> Self {
        ScenarioPlan {
            seed: 1,
            // 2020-01-01T00:00:00Z
            start_time: 1_577_836_800,
            start_height: 610_000,
            block_interval_secs: 600,
            txs_per_block: 1,
            users: 2_000,
            exchanges: 4,
            wasabi_mixes: 200,
            wasabi_min_peers: 10,
            wasabi_max_peers: 100,
            remix_probability: 0.3,
            standalone_wasabi: 5,
            wasabi_near_misses: 100,
            whirlpool: vec![
                PoolPlan { pool: PoolKind::Btc0_001, mixes: 40, genesis: 1 },
                PoolPlan { pool: PoolKind::Btc0_01, mixes: 60, genesis: 3 },
                PoolPlan { pool: PoolKind::Btc0_05, mixes: 60, genesis: 3 },
                PoolPlan { pool: PoolKind::Btc0_5, mixes: 20, genesis: 1 },
            ],
            whirlpool_near_misses: 20,
            zero_remix_plants: 5,
            background_payments: 3_000,
            batch_payouts: 60,
            exits: 1_500,
            star_plants: 1,
            star_fan_in: 20,
            collector_plants: 1,
            collector_fan_out: 20,
            exchange_direct_plants: 10,
            exchange_indirect_plants: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("{0}")]
    Invalid(String),
}

fn bad<T>(msg: impl Into<String>) -> Result<T, PlanError> {
    Err(PlanError::Invalid(msg.into()))
}

impl ScenarioPlan {
    /// Plan with every count zeroed, for building focused scenarios.
    pub fn empty(seed: u64) -> Self {
        ScenarioPlan {
            seed,
            wasabi_mixes: 0,
            standalone_wasabi: 0,
            wasabi_near_misses: 0,
            whirlpool: Vec::new(),
            whirlpool_near_misses: 0,
            zero_remix_plants: 0,
            background_payments: 0,
            batch_payouts: 0,
            exits: 0,
            star_plants: 0,
            collector_plants: 0,
            exchange_direct_plants: 0,
            exchange_indirect_plants: 0,
            ..ScenarioPlan::default()
        }
    }

    /// 5,000 Wasabi rounds against near-misses and ordinary traffic.
    pub fn wcdh_suite(seed: u64) -> Self {
        ScenarioPlan {
            wasabi_mixes: 5_000,
            wasabi_near_misses: 2_000,
            background_payments: 3_000,
            batch_payouts: 100,
            exits: 500,
            txs_per_block: 4,
            ..ScenarioPlan::empty(seed)
        }
    }

    /// Wasabi rounds plus a mixed background for the classifier corpus.
    pub fn classifier_suite(seed: u64) -> Self {
        ScenarioPlan {
            wasabi_mixes: 5_000,
            whirlpool: ScenarioPlan::default().whirlpool,
            background_payments: 4_000,
            batch_payouts: 150,
            exits: 1_000,
            txs_per_block: 4,
            ..ScenarioPlan::empty(seed)
        }
    }

    /// Over 1,000 Whirlpool mixes across the four pools, three genesis mixes
    /// in the 0.01 and 0.05 pools.
    pub fn whirlpool_suite(seed: u64) -> Self {
        ScenarioPlan {
            whirlpool: vec![
                PoolPlan { pool: PoolKind::Btc0_001, mixes: 250, genesis: 1 },
                PoolPlan { pool: PoolKind::Btc0_01, mixes: 300, genesis: 3 },
                PoolPlan { pool: PoolKind::Btc0_05, mixes: 300, genesis: 3 },
                PoolPlan { pool: PoolKind::Btc0_5, mixes: 200, genesis: 1 },
            ],
            whirlpool_near_misses: 60,
            zero_remix_plants: 20,
            background_payments: 1_000,
            exits: 400,
            ..ScenarioPlan::empty(seed)
        }
    }

    /// One Wasabi round whose inputs all come from a single funder.
    pub fn star(seed: u64, fan_in: usize) -> Self {
        ScenarioPlan {
            star_plants: 1,
            star_fan_in: fan_in,
            ..ScenarioPlan::empty(seed)
        }
    }

    /// One Wasabi round whose mixed outputs all end up with one collector.
    pub fn collector(seed: u64, fan_out: usize) -> Self {
        ScenarioPlan {
            collector_plants: 1,
            collector_fan_out: fan_out,
            ..ScenarioPlan::empty(seed)
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.txs_per_block == 0 {
            return bad("txs_per_block must be at least 1");
        }
        if self.block_interval_secs <= 0 {
            return bad("block_interval_secs must be positive");
        }
        if self.users < 10 {
            return bad("users must be at least 10");
        }
        if self.wasabi_min_peers < 10 || self.wasabi_max_peers < self.wasabi_min_peers {
            return bad("Wasabi peers must satisfy 10 <= min <= max");
        }
        if !(0.0..=1.0).contains(&self.remix_probability) {
            return bad("remix_probability must lie in [0, 1]");
        }
        let mut seen = Vec::new();
        for p in &self.whirlpool {
            if seen.contains(&p.pool) {
                return bad(format!("pool {} listed twice", p.pool));
            }
            seen.push(p.pool);
            if p.mixes > 0 && (p.genesis == 0 || p.genesis > p.mixes) {
                return bad(format!("pool {}: need 1 <= genesis <= mixes", p.pool));
            }
        }
        if self.star_plants > 0 && self.star_fan_in < 10 {
            return bad("star_fan_in must be at least 10");
        }
        if self.collector_plants > 0 && self.collector_fan_out < 10 {
            return bad("collector_fan_out must be at least 10");
        }
        if self.exchange_direct_plants + self.exchange_indirect_plants + self.batch_payouts > 0
            && self.exchanges == 0
        {
            return bad("exchange plants and batch payouts need at least one exchange");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in [
            ScenarioPlan::default(),
            ScenarioPlan::wcdh_suite(1),
            ScenarioPlan::classifier_suite(1),
            ScenarioPlan::whirlpool_suite(1),
            ScenarioPlan::star(1, 20),
            ScenarioPlan::collector(1, 20),
        ] {
            p.validate().unwrap();
        }
        let total: usize = ScenarioPlan::whirlpool_suite(1).whirlpool.iter().map(|p| p.mixes).sum();
        assert!(total >= 1_000);
    }

    #[test]
    fn rejects_bad_knobs() {
        let p = ScenarioPlan { wasabi_min_peers: 9, ..ScenarioPlan::default() };
        assert!(p.validate().is_err());
        let p = ScenarioPlan {
            whirlpool: vec![PoolPlan { pool: PoolKind::Btc0_01, mixes: 5, genesis: 0 }],
            ..ScenarioPlan::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn plan_json_round_trip() {
        let p = ScenarioPlan::default();
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<ScenarioPlan>(&text).unwrap(), p);
        let partial: ScenarioPlan = serde_json::from_str(r#"{"seed": 9, "wasabi_mixes": 3}"#).unwrap();
        assert_eq!((partial.seed, partial.wasabi_mixes, partial.users), (9, 3, 2_000));
    }
}
