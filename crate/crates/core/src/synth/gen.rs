use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::plan::ScenarioPlan;
use super::truth::{FanPlant, GroundTruth, NearMiss, PlantedFlow, SynthLabel};
use crate::amount::Amount;
use crate::chain::{OutPoint, ScriptClass, Transaction, TxId, TxInput, TxOutput};
use crate::detect::Protocol;
use crate::entity::{AttributionTag, Category, TagTarget};
use crate::metrics::ExchangeHop;
use crate::whirlpool::{PoolKind, DEFAULT_PREMIX_TOLERANCE, MIX_INPUTS, MIX_OUTPUTS};

const BTC: u64 = 100_000_000;
const WASABI_DENOM_CENTER: u64 = 10_000_000;
/// Generated rounds stay well inside the detector's band.
const WASABI_DENOM_SPREAD: u64 = 1_500_000;
const WASABI_BAND: u64 = 2_000_000;
/// Per mixed output, in thousandths of the denomination.
const COORDINATOR_FEE_PERMILLE: u64 = 3;
const FAUCET_BATCH: usize = 199;
const POSTMIX_RESERVE: usize = 8;
const SELECT_TRIES: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    User { legacy: bool },
    Exchange,
    /// Faucet, coordinators, plant participants: never picked at random.
    Special,
}

struct Owner {
    role: Role,
    /// Reused address, if the owner never rotates.
    fixed: Option<String>,
}

#[derive(Debug, Clone, Copy)]
struct Coin {
    op: OutPoint,
    value: u64,
    owner: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Token {
    Wasabi,
    Standalone,
    WasabiNear(NearMiss),
    Whirlpool(PoolKind),
    WhirlpoolNear(NearMiss),
    ZeroRemix,
    Payment,
    Batch,
    Exit,
    Star,
    Collector,
    Direct,
    Indirect,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum OutKind {
    Mixed,
    Change,
    Fee,
}

struct RoundSpec {
    denom: u64,
    /// Mixed outputs per participant.
    outs_per_peer: Vec<usize>,
    remix_probability: f64,
    coordinator: bool,
    /// Give participants change in shared values so at most one is unique.
    grouped_change: bool,
}

struct Round {
    txid: TxId,
    mixed: Vec<Coin>,
    change: Vec<Coin>,
    fresh: u64,
    remix: u64,
}

struct Peer {
    owner: u32,
    coins: Vec<Coin>,
    outs: usize,
}

impl Peer {
    fn total(&self) -> u64 {
        self.coins.iter().map(|c| c.value).sum()
    }
}

pub(crate) struct Generated {
    pub transactions: Vec<Transaction>,
    pub truth: GroundTruth,
    pub tags: Vec<AttributionTag>,
    pub coordinators: Vec<String>,
}

pub(crate) struct Generator<'p> {
    plan: &'p ScenarioPlan,
    rng: ChaCha8Rng,
    txs: Vec<Transaction>,
    truth: GroundTruth,
    tx_counter: u64,
    addr_counter: u64,
    owners: Vec<Owner>,
    wallets: Vec<Vec<Coin>>,
    listed: Vec<bool>,
    funded_segwit: Vec<u32>,
    funded_legacy: Vec<u32>,
    users: Vec<u32>,
    segwit_users: Vec<u32>,
    exchanges: Vec<u32>,
    exchange_addresses: Vec<(u32, String)>,
    faucet_owner: u32,
    faucet: Coin,
    coordinator: u32,
    pool_fee_owner: u32,
    wasabi_mixed: Vec<Coin>,
    wasabi_change: Vec<Coin>,
    premix: BTreeMap<PoolKind, Vec<Coin>>,
    postmix: BTreeMap<PoolKind, Vec<Coin>>,
    genesis_left: BTreeMap<PoolKind, usize>,
}

impl<'p> Generator<'p> {
    pub fn new(plan: &'p ScenarioPlan) -> Self {
        let mut g = Generator {
            plan,
            rng: ChaCha8Rng::seed_from_u64(plan.seed),
            txs: Vec::new(),
            truth: GroundTruth::default(),
            tx_counter: 0,
            addr_counter: 0,
            owners: Vec::new(),
            wallets: Vec::new(),
            listed: Vec::new(),
            funded_segwit: Vec::new(),
            funded_legacy: Vec::new(),
            users: Vec::new(),
            segwit_users: Vec::new(),
            exchanges: Vec::new(),
            exchange_addresses: Vec::new(),
            faucet_owner: 0,
            faucet: Coin {
                op: OutPoint { txid: TxId::from_bytes([0; 32]), vout: 0 },
                value: 0,
                owner: 0,
            },
            coordinator: 0,
            pool_fee_owner: 0,
            wasabi_mixed: Vec::new(),
            wasabi_change: Vec::new(),
            premix: BTreeMap::new(),
            postmix: BTreeMap::new(),
            genesis_left: plan.whirlpool.iter().map(|p| (p.pool, p.genesis)).collect(),
        };
        g.faucet_owner = g.add_owner(Role::Special);
        g.coordinator = g.add_owner(Role::Special);
        let addr = g.fresh_address(g.coordinator).0;
        g.owners[g.coordinator as usize].fixed = Some(addr);
        g.pool_fee_owner = g.add_owner(Role::Special);
        let addr = g.fresh_address(g.pool_fee_owner).0;
        g.owners[g.pool_fee_owner as usize].fixed = Some(addr);
        for _ in 0..plan.users {
            let legacy = g.rng.gen_bool(0.2);
            let id = g.add_owner(Role::User { legacy });
            g.users.push(id);
            if !legacy {
                g.segwit_users.push(id);
            }
        }
        for _ in 0..plan.exchanges {
            let id = g.add_owner(Role::Exchange);
            g.exchanges.push(id);
        }
        g.faucet_root();
        g
    }

    pub fn run(mut self) -> Generated {
        let mut tokens = self.tokens();
        tokens.shuffle(&mut self.rng);
        let mut deferred = Vec::new();
        for t in tokens {
            if !self.apply(t) {
                deferred.push(t);
            }
        }
        for t in deferred {
            if !self.apply(t) {
                log::debug!("synth: dropped {t:?}, no coin available");
            }
        }
        self.finish()
    }

    fn tokens(&self) -> Vec<Token> {
        let p = self.plan;
        let mut t = Vec::new();
        let mut push = |tok: Token, n: usize| t.extend(std::iter::repeat_n(tok, n));
        push(Token::Wasabi, p.wasabi_mixes);
        push(Token::Standalone, p.standalone_wasabi);
        for i in 0..p.wasabi_near_misses {
            push(Token::WasabiNear(NearMiss::WASABI[i % 4]), 1);
        }
        for pp in &p.whirlpool {
            push(Token::Whirlpool(pp.pool), pp.mixes);
        }
        for i in 0..p.whirlpool_near_misses {
            push(Token::WhirlpoolNear(NearMiss::WHIRLPOOL[i % 3]), 1);
        }
        push(Token::ZeroRemix, p.zero_remix_plants);
        push(Token::Payment, p.background_payments);
        push(Token::Batch, p.batch_payouts);
        push(Token::Exit, p.exits);
        push(Token::Star, p.star_plants);
        push(Token::Collector, p.collector_plants);
        push(Token::Direct, p.exchange_direct_plants);
        push(Token::Indirect, p.exchange_indirect_plants);
        t
    }

    /// Returns false when the token needs a coin that does not exist yet.
    fn apply(&mut self, t: Token) -> bool {
        match t {
            Token::Wasabi => {
                let p = self.plan.remix_probability;
                self.wasabi_round(p);
            }
            Token::Standalone => self.wasabi_round(0.0),
            Token::WasabiNear(kind) => self.wasabi_near_miss(kind),
            Token::Whirlpool(pool) => self.whirlpool_mix(pool),
            Token::WhirlpoolNear(kind) => self.whirlpool_near_miss(kind),
            Token::ZeroRemix => self.zero_remix_plant(),
            Token::Payment => self.payment(),
            Token::Batch => self.batch_payout(),
            Token::Exit => return self.exit(),
            Token::Star => self.star_plant(),
            Token::Collector => self.collector_plant(),
            Token::Direct => return self.exchange_plant(ExchangeHop::Direct),
            Token::Indirect => return self.exchange_plant(ExchangeHop::Indirect),
        }
        true
    }

    fn finish(self) -> Generated {
        let mut tags: Vec<AttributionTag> = self
            .exchange_addresses
            .iter()
            .map(|(owner, addr)| {
                let n = self.exchanges.iter().position(|e| e == owner).expect("exchange owner");
                AttributionTag {
                    target: TagTarget::Address(addr.clone()),
                    label: format!("exchange-{n}"),
                    category: Category::Exchange,
                }
            })
            .collect();
        let coordinator = self.owners[self.coordinator as usize].fixed.clone().expect("fixed");
        tags.push(AttributionTag {
            target: TagTarget::Address(coordinator.clone()),
            label: "wasabi-coordinator".into(),
            category: Category::Service,
        });
        tags.push(AttributionTag {
            target: TagTarget::Address(self.owners[self.pool_fee_owner as usize].fixed.clone().expect("fixed")),
            label: "whirlpool-fees".into(),
            category: Category::Service,
        });
        Generated {
            transactions: self.txs,
            truth: self.truth,
            tags,
            coordinators: vec![coordinator],
        }
    }

    // ---- identities and bookkeeping ----

    fn add_owner(&mut self, role: Role) -> u32 {
        let id = self.owners.len() as u32;
        self.owners.push(Owner { role, fixed: None });
        self.wallets.push(Vec::new());
        self.listed.push(false);
        id
    }

    fn digest(&self, domain: &[u8], counter: u64) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(domain);
        h.update(self.plan.seed.to_le_bytes());
        h.update(counter.to_le_bytes());
        h.finalize().into()
    }

    fn fresh_address(&mut self, owner: u32) -> (String, ScriptClass) {
        let o = &self.owners[owner as usize];
        if let Some(a) = &o.fixed {
            return (a.clone(), ScriptClass::P2wpkh);
        }
        let role = o.role;
        self.addr_counter += 1;
        let h = hex::encode(self.digest(b"address", self.addr_counter));
        match role {
            Role::User { legacy: true } => (format!("1{}", &h[..33]), ScriptClass::Other("p2pkh".into())),
            Role::Exchange => {
                let a = format!("3{}", &h[..33]);
                self.exchange_addresses.push((owner, a.clone()));
                (a, ScriptClass::Other("p2sh".into()))
            }
            _ => (format!("bc1q{}", &h[..38]), ScriptClass::P2wpkh),
        }
    }

    fn next_txid(&mut self) -> TxId {
        self.tx_counter += 1;
        TxId::from_bytes(self.digest(b"tx", self.tx_counter))
    }

    fn emit(&mut self, inputs: &[Coin], outputs: &[(u32, u64)], label: SynthLabel) -> (TxId, Vec<Coin>) {
        debug_assert!(!outputs.is_empty());
        debug_assert!(
            inputs.iter().map(|c| c.value).sum::<u64>() >= outputs.iter().map(|o| o.1).sum::<u64>(),
            "generator produced a negative fee"
        );
        let txid = self.next_txid();
        let mut outs = Vec::with_capacity(outputs.len());
        let mut coins = Vec::with_capacity(outputs.len());
        for (vout, &(owner, value)) in outputs.iter().enumerate() {
            let (address, script) = self.fresh_address(owner);
            outs.push(TxOutput { value: Amount::from_sat(value), address, script });
            coins.push(Coin { op: OutPoint { txid, vout: vout as u32 }, value, owner });
        }
        let height_offset = self.txs.len() as u64 / u64::from(self.plan.txs_per_block);
        self.txs.push(Transaction {
            txid,
            block_height: self.plan.start_height + height_offset,
            timestamp: self.plan.start_time + height_offset as i64 * self.plan.block_interval_secs,
            inputs: inputs
                .iter()
                .map(|c| TxInput { prev_txid: c.op.txid, prev_vout: c.op.vout })
                .collect(),
            outputs: outs,
        });
        self.truth.labels.push((txid, label));
        (txid, coins)
    }

    fn deposit(&mut self, c: Coin) {
        let o = c.owner as usize;
        if let Role::User { legacy } = self.owners[o].role {
            if !self.listed[o] {
                self.listed[o] = true;
                if legacy {
                    self.funded_legacy.push(c.owner);
                } else {
                    self.funded_segwit.push(c.owner);
                }
            }
        }
        self.wallets[o].push(c);
    }

    fn deposit_all(&mut self, coins: Vec<Coin>) {
        for c in coins {
            self.deposit(c);
        }
    }

    /// A user with a non-empty wallet, lazily dropping drained entries.
    fn pick_funded(&mut self, legacy: bool) -> Option<u32> {
        loop {
            let list = if legacy { &mut self.funded_legacy } else { &mut self.funded_segwit };
            if list.is_empty() {
                return None;
            }
            let i = self.rng.gen_range(0..list.len());
            let u = list[i];
            if self.wallets[u as usize].is_empty() {
                list.swap_remove(i);
                self.listed[u as usize] = false;
                continue;
            }
            return Some(u);
        }
    }

    fn try_take_segwit(&mut self, min: u64) -> Option<Coin> {
        for _ in 0..SELECT_TRIES {
            let u = self.pick_funded(false)?;
            let w = &mut self.wallets[u as usize];
            if let Some(i) = w.iter().position(|c| c.value >= min) {
                return Some(w.swap_remove(i));
            }
        }
        None
    }

    /// A native segwit coin worth at least `min`, minting if none is found.
    fn take_fresh(&mut self, min: u64) -> Coin {
        if let Some(c) = self.try_take_segwit(min) {
            return c;
        }
        self.mint_batch();
        if let Some(c) = self.try_take_segwit(min) {
            return c;
        }
        let u = self.random_segwit_user();
        let extra = self.rng.gen_range(0..BTC / 2);
        self.mint(&[(u, min + extra)]).remove(0)
    }

    fn random_user(&mut self) -> u32 {
        *self.users.choose(&mut self.rng).expect("users")
    }

    fn random_segwit_user(&mut self) -> u32 {
        match self.segwit_users.choose(&mut self.rng) {
            Some(&u) => u,
            None => self.random_user(),
        }
    }

    fn random_other_user(&mut self, not: u32) -> u32 {
        loop {
            let u = self.random_user();
            if u != not {
                return u;
            }
        }
    }

    fn take_random(rng: &mut ChaCha8Rng, pool: &mut Vec<Coin>) -> Option<Coin> {
        if pool.is_empty() {
            return None;
        }
        let i = rng.gen_range(0..pool.len());
        Some(pool.swap_remove(i))
    }

    /// Rounds a payment amount to a randomly chosen number of decimals.
    fn styled(&mut self, sat: u64) -> u64 {
        let decimals = *[2u32, 3, 4, 5, 6, 8, 8].choose(&mut self.rng).expect("nonempty");
        let unit = 10u64.pow(8 - decimals);
        let v = sat / unit * unit;
        if v == 0 {
            sat
        } else {
            v
        }
    }

    // ---- faucet ----

    fn faucet_root(&mut self) {
        let prev = TxId::from_bytes(self.digest(b"faucet-root", 0));
        let root = Coin { op: OutPoint { txid: prev, vout: 0 }, value: 21_000_000 * BTC, owner: self.faucet_owner };
        let (_, coins) = self.emit(&[root], &[(self.faucet_owner, root.value - 10_000)], SynthLabel::Background);
        self.faucet = coins[0];
    }

    /// One faucet transaction paying `payees`; the faucet keeps the change
    /// as the last output.
    fn mint(&mut self, payees: &[(u32, u64)]) -> Vec<Coin> {
        let total: u64 = payees.iter().map(|p| p.1).sum();
        let fee = 1_000 + 50 * payees.len() as u64;
        let change = self.faucet.value.checked_sub(total + fee).expect("faucet exhausted");
        let mut outs = payees.to_vec();
        outs.push((self.faucet_owner, change));
        let (_, mut coins) = self.emit(&[self.faucet], &outs, SynthLabel::Background);
        self.faucet = coins.pop().expect("change output");
        coins
    }

    fn mint_batch(&mut self) {
        let mut payees = Vec::with_capacity(FAUCET_BATCH);
        for _ in 0..FAUCET_BATCH {
            let u = self.random_user();
            let v = self.rng.gen_range(13_000_000..=150_000_000);
            payees.push((u, v));
        }
        let coins = self.mint(&payees);
        self.deposit_all(coins);
    }

    // ---- Wasabi ----

    fn wasabi_denom(&mut self) -> u64 {
        self.rng
            .gen_range(WASABI_DENOM_CENTER - WASABI_DENOM_SPREAD..=WASABI_DENOM_CENTER + WASABI_DENOM_SPREAD)
    }

    fn peer_count(&mut self) -> usize {
        self.rng.gen_range(self.plan.wasabi_min_peers..=self.plan.wasabi_max_peers)
    }

    fn round(&mut self, spec: &RoundSpec, forced: Option<Vec<Coin>>, label: SynthLabel) -> Round {
        let coord_fee = if spec.coordinator { spec.denom * COORDINATOR_FEE_PERMILLE / 1000 } else { 0 };
        let mut remix = 0u64;
        let mut peers: Vec<Peer> = Vec::with_capacity(spec.outs_per_peer.len());
        if let Some(forced) = forced {
            debug_assert_eq!(forced.len(), spec.outs_per_peer.len());
            for (c, &outs) in forced.into_iter().zip(&spec.outs_per_peer) {
                peers.push(Peer { owner: c.owner, coins: vec![c], outs });
            }
        } else {
            for &outs in &spec.outs_per_peer {
                let need = outs as u64 * (spec.denom + coord_fee) + 5_000;
                let remixing = !self.wasabi_mixed.is_empty() && self.rng.gen_bool(spec.remix_probability);
                let mut coins = Vec::new();
                if remixing {
                    let c = Self::take_random(&mut self.rng, &mut self.wasabi_mixed).expect("nonempty");
                    remix += c.value;
                    coins.push(c);
                }
                let have: u64 = coins.iter().map(|c| c.value).sum();
                if have < need {
                    coins.push(self.take_fresh(need - have));
                }
                peers.push(Peer { owner: coins[0].owner, coins, outs });
            }
        }

        let mut used: HashSet<u64> = HashSet::from([spec.denom]);
        let mut changes = vec![0u64; peers.len()];
        let spare = |p: &Peer| p.total() - p.outs as u64 * (spec.denom + coord_fee);
        if spec.grouped_change {
            let mut order: Vec<usize> = (0..peers.len()).collect();
            order.shuffle(&mut self.rng);
            if self.rng.gen_bool(0.5) {
                let lone = order.pop().expect("peers");
                let mut c = spare(&peers[lone]) - self.rng.gen_range(300..=3_000);
                while !used.insert(c) {
                    c -= 1;
                }
                changes[lone] = c;
            }
            let mut groups: Vec<&[usize]> = order.chunks(2).collect();
            if let Some(lone) = groups.pop_if(|g| g.len() == 1) {
                let prev = groups.pop().expect("at least two grouped peers");
                let start = order.len() - prev.len() - lone.len();
                groups.push(&order[start..]);
            }
            for g in groups {
                let min_spare = g.iter().map(|&i| spare(&peers[i])).min().expect("nonempty");
                let mut c = min_spare - self.rng.gen_range(1_000..=3_000);
                while !used.insert(c) {
                    c -= 1;
                }
                for &i in g {
                    changes[i] = c;
                }
            }
        } else {
            for (i, p) in peers.iter().enumerate() {
                let mut c = spare(p) - self.rng.gen_range(300..=3_000);
                while !used.insert(c) {
                    c -= 1;
                }
                changes[i] = c;
            }
        }

        let mut outputs: Vec<(u32, u64, OutKind)> = Vec::new();
        for (p, &c) in peers.iter().zip(&changes) {
            for _ in 0..p.outs {
                outputs.push((p.owner, spec.denom, OutKind::Mixed));
            }
            outputs.push((p.owner, c, OutKind::Change));
        }
        if spec.coordinator {
            let mut fee = coord_fee * spec.outs_per_peer.iter().sum::<usize>() as u64;
            while !used.insert(fee) {
                fee -= 1;
            }
            outputs.push((self.coordinator, fee, OutKind::Fee));
        }
        outputs.shuffle(&mut self.rng);
        let mut inputs: Vec<Coin> = peers.into_iter().flat_map(|p| p.coins).collect();
        inputs.shuffle(&mut self.rng);
        let fresh = inputs.iter().map(|c| c.value).sum::<u64>() - remix;

        let plain: Vec<(u32, u64)> = outputs.iter().map(|o| (o.0, o.1)).collect();
        let (txid, coins) = self.emit(&inputs, &plain, label);
        let mut round = Round { txid, mixed: Vec::new(), change: Vec::new(), fresh, remix };
        for (c, o) in coins.into_iter().zip(&outputs) {
            match o.2 {
                OutKind::Mixed => round.mixed.push(c),
                OutKind::Change => round.change.push(c),
                OutKind::Fee => {}
            }
        }
        round
    }

    fn record_wasabi(&mut self, r: &Round) {
        let t = self.truth.inflows.entry(Protocol::Wasabi).or_default();
        t.fresh_sat += r.fresh;
        t.remix_sat += r.remix;
        if r.remix == 0 {
            self.truth.remixless_wasabi.insert(r.txid);
        }
    }

    fn wasabi_round(&mut self, remix_probability: f64) {
        let m = self.peer_count();
        let spec = RoundSpec {
            denom: self.wasabi_denom(),
            outs_per_peer: vec![1; m],
            remix_probability,
            coordinator: true,
            grouped_change: false,
        };
        let r = self.round(&spec, None, SynthLabel::Wasabi);
        self.record_wasabi(&r);
        self.wasabi_mixed.extend(r.mixed);
        self.wasabi_change.extend(r.change);
    }

    fn wasabi_near_miss(&mut self, kind: NearMiss) {
        let mut spec = RoundSpec {
            denom: self.wasabi_denom(),
            outs_per_peer: Vec::new(),
            remix_probability: 0.0,
            coordinator: false,
            grouped_change: false,
        };
        match kind {
            NearMiss::FewEqualOutputs => {
                spec.outs_per_peer = vec![1; self.rng.gen_range(3..=9)];
            }
            NearMiss::OutOfBand => {
                let gap = WASABI_BAND + 1;
                spec.denom = match self.rng.gen_range(0..4) {
                    0 => WASABI_DENOM_CENTER + gap + self.rng.gen_range(0..200_000),
                    1 => WASABI_DENOM_CENTER - gap - self.rng.gen_range(0..200_000),
                    2 => self.rng.gen_range(500_000..WASABI_DENOM_CENTER - gap),
                    _ => self.rng.gen_range(WASABI_DENOM_CENTER + gap..=30_000_000),
                };
                spec.outs_per_peer = vec![1; self.peer_count()];
            }
            NearMiss::FewUniqueOutputs => {
                spec.outs_per_peer = vec![1; self.peer_count()];
                spec.grouped_change = true;
            }
            NearMiss::FewInputs => {
                let m = self.peer_count();
                let mut outs = vec![1; m];
                let merges = self.rng.gen_range(1..=m / 3);
                for _ in 0..merges {
                    let last = outs.pop().expect("nonempty");
                    let i = self.rng.gen_range(0..outs.len());
                    if outs[i] < 3 {
                        outs[i] += last;
                    } else {
                        outs.push(last);
                        break;
                    }
                }
                spec.outs_per_peer = outs;
            }
            _ => unreachable!("not a Wasabi near-miss"),
        }
        let r = self.round(&spec, None, SynthLabel::Background);
        self.truth.near_misses.insert(r.txid, kind);
        self.deposit_all(r.mixed);
        self.deposit_all(r.change);
    }

    fn star_plant(&mut self) {
        let k = self.plan.star_fan_in;
        let funder = self.add_owner(Role::Special);
        let mut payees = Vec::with_capacity(k);
        for _ in 0..k {
            let peer = self.add_owner(Role::Special);
            payees.push((peer, self.rng.gen_range(13_000_000..=20_000_000)));
        }
        let total: u64 = payees.iter().map(|p| p.1).sum();
        let coin = self.mint(&[(funder, total + 2_000)]).remove(0);
        let (_, fanned) = self.emit(&[coin], &payees, SynthLabel::Background);
        let spec = RoundSpec {
            denom: self.wasabi_denom(),
            outs_per_peer: vec![1; k],
            remix_probability: 0.0,
            coordinator: true,
            grouped_change: false,
        };
        let r = self.round(&spec, Some(fanned), SynthLabel::Wasabi);
        self.record_wasabi(&r);
        self.truth.stars.push(FanPlant { coinjoin: r.txid, fan: k });
        self.wasabi_mixed.extend(r.mixed);
        self.wasabi_change.extend(r.change);
    }

    fn collector_plant(&mut self) {
        let k = self.plan.collector_fan_out;
        let spec = RoundSpec {
            denom: self.wasabi_denom(),
            outs_per_peer: vec![1; k],
            remix_probability: 0.0,
            coordinator: true,
            grouped_change: false,
        };
        let r = self.round(&spec, None, SynthLabel::Wasabi);
        self.record_wasabi(&r);
        self.wasabi_change.extend(r.change);
        let collector = self.add_owner(Role::Special);
        let mut gathered = Vec::with_capacity(k);
        for c in r.mixed {
            let (_, out) = self.emit(&[c], &[(collector, c.value - 500)], SynthLabel::Background);
            gathered.push(out[0]);
        }
        let total: u64 = gathered.iter().map(|c| c.value).sum();
        self.emit(&gathered, &[(collector, total - 2_000)], SynthLabel::Background);
        self.truth.collectors.push(FanPlant { coinjoin: r.txid, fan: k });
    }

    fn exchange_plant(&mut self, hop: ExchangeHop) -> bool {
        let Some(c) = Self::take_random(&mut self.rng, &mut self.wasabi_mixed) else {
            return false;
        };
        let exchange = *self.exchanges.choose(&mut self.rng).expect("exchange");
        let (spender, coins) = match hop {
            ExchangeHop::Direct => self.emit(&[c], &[(exchange, c.value - 700)], SynthLabel::Background),
            ExchangeHop::Indirect => {
                let middle = self.add_owner(Role::Special);
                let (spender, mid) = self.emit(&[c], &[(middle, c.value - 700)], SynthLabel::Background);
                let (_, coins) = self.emit(&mid, &[(exchange, mid[0].value - 700)], SynthLabel::Background);
                (spender, coins)
            }
        };
        self.deposit_all(coins);
        self.truth.exchange_flows.push(PlantedFlow { coinjoin: c.op.txid, vout: c.op.vout, spender, hop });
        true
    }

    // ---- Whirlpool ----

    fn tx0(&mut self, pool: PoolKind) {
        let d = pool.denomination().to_sat();
        let n = match pool {
            PoolKind::Btc0_5 => self.rng.gen_range(1..=2),
            PoolKind::Btc0_05 => self.rng.gen_range(2..=20),
            _ => self.rng.gen_range(5..=40),
        };
        let premix = d + self.rng.gen_range(10_000..=100_000);
        let pool_fee = d * 5 / 100;
        let miner = self.rng.gen_range(1_000..=5_000);
        let need = n * premix + pool_fee + miner + 10_000;
        let coin = self.take_fresh(need);
        let mut outs: Vec<(u32, u64)> = vec![(coin.owner, premix); n as usize];
        outs.push((self.pool_fee_owner, pool_fee));
        outs.push((coin.owner, coin.value - need + 10_000));
        let (_, mut coins) = self.emit(&[coin], &outs, SynthLabel::Tx0);
        let change = coins.pop().expect("change");
        coins.pop();
        self.deposit(change);
        self.premix.entry(pool).or_default().extend(coins);
    }

    fn take_premix(&mut self, pool: PoolKind) -> Coin {
        if self.premix.get(&pool).is_none_or(Vec::is_empty) {
            self.tx0(pool);
        }
        let coins = self.premix.get_mut(&pool).expect("just filled");
        Self::take_random(&mut self.rng, coins).expect("nonempty")
    }

    fn whirlpool_mix(&mut self, pool: PoolKind) {
        let d = pool.denomination().to_sat();
        let left = self.genesis_left.get_mut(&pool).expect("planned pool");
        let genesis = *left > 0;
        if genesis {
            *left -= 1;
        }
        let postmix = self.postmix.entry(pool).or_default();
        let remixes = if genesis { 0 } else { self.rng.gen_range(1..MIX_INPUTS).min(postmix.len()) };
        assert!(genesis || remixes > 0, "pool {pool} has no postmix coin to remix");
        let mut inputs = Vec::with_capacity(MIX_INPUTS);
        for _ in 0..remixes {
            inputs.push(Self::take_random(&mut self.rng, postmix).expect("counted"));
        }
        let remix: u64 = inputs.iter().map(|c| c.value).sum();
        while inputs.len() < MIX_INPUTS {
            let c = self.take_premix(pool);
            inputs.push(c);
        }
        inputs.shuffle(&mut self.rng);
        let fresh = inputs.iter().map(|c| c.value).sum::<u64>() - remix;
        let outs: Vec<(u32, u64)> = inputs.iter().map(|c| (c.owner, d)).collect();
        debug_assert_eq!(outs.len(), MIX_OUTPUTS);
        let (txid, coins) = self.emit(&inputs, &outs, SynthLabel::Whirlpool(pool));
        self.postmix.entry(pool).or_default().extend(coins);
        if genesis {
            self.truth.genesis.entry(pool).or_default().insert(txid);
        }
        let t = self.truth.inflows.entry(Protocol::Samourai).or_default();
        t.fresh_sat += fresh;
        t.remix_sat += remix;
    }

    /// Five users funded by the faucet with the given amounts.
    fn mint_spread(&mut self, values: &[u64]) -> Vec<Coin> {
        let payees: Vec<(u32, u64)> = values.iter().map(|&v| (self.random_segwit_user(), v)).collect();
        self.mint(&payees)
    }

    fn whirlpool_near_miss(&mut self, kind: NearMiss) {
        let pool = *PoolKind::ALL.choose(&mut self.rng).expect("pools");
        let d = pool.denomination().to_sat();
        let (n_in, values, outs): (usize, u64, Vec<u64>) = match kind {
            NearMiss::WhirlpoolValue => (5, d + 100_000, vec![d, d, d, d, d + 1]),
            NearMiss::WhirlpoolInputCount => (4, d * 13 / 10, vec![d; 5]),
            NearMiss::WhirlpoolOutputCount => (5, d * 13 / 10, vec![d; 6]),
            _ => unreachable!("not a Whirlpool near-miss"),
        };
        let ins = self.mint_spread(&vec![values; n_in]);
        let payees: Vec<(u32, u64)> =
            outs.iter().enumerate().map(|(i, &v)| (ins[i % n_in].owner, v)).collect();
        let (txid, coins) = self.emit(&ins, &payees, SynthLabel::Background);
        self.truth.near_misses.insert(txid, kind);
        self.deposit_all(coins);
    }

    fn zero_remix_plant(&mut self) {
        let pool = *PoolKind::ALL.choose(&mut self.rng).expect("pools");
        let d = pool.denomination().to_sat();
        let values: Vec<u64> = (0..MIX_INPUTS)
            .map(|_| d + DEFAULT_PREMIX_TOLERANCE.to_sat() + self.rng.gen_range(1..=50_000))
            .collect();
        let ins = self.mint_spread(&values);
        let payees: Vec<(u32, u64)> = ins.iter().map(|c| (c.owner, d)).collect();
        let (txid, coins) = self.emit(&ins, &payees, SynthLabel::Background);
        self.truth.zero_remix_plants.insert(txid);
        self.deposit_all(coins);
    }

    // ---- background ----

    fn payment(&mut self) {
        let legacy = self.rng.gen_bool(0.2);
        let payer = match self.pick_funded(legacy).or_else(|| self.pick_funded(!legacy)) {
            Some(u) => u,
            None => {
                self.mint_batch();
                self.pick_funded(false).or_else(|| self.pick_funded(true)).expect("just funded")
            }
        };
        let k = self.rng.gen_range(1..=3).min(self.wallets[payer as usize].len());
        let mut inputs = Vec::with_capacity(k);
        for _ in 0..k {
            let w = &mut self.wallets[payer as usize];
            inputs.push(Self::take_random(&mut self.rng, w).expect("counted"));
        }
        let total: u64 = inputs.iter().map(|c| c.value).sum();
        let outs = if total < 50_000 {
            vec![(payer, total - (total / 10).min(200))]
        } else {
            let raw = self.rng.gen_range(total / 20..=total * 9 / 10);
            let fee = self.rng.gen_range(200..=3_000);
            let amount = self.styled(raw).min(total - fee);
            let to = self.random_other_user(payer);
            match total - amount - fee {
                c if c >= 5_000 => vec![(to, amount), (payer, c)],
                _ => vec![(to, amount)],
            }
        };
        let (_, coins) = self.emit(&inputs, &outs, SynthLabel::Background);
        self.deposit_all(coins);
    }

    fn batch_payout(&mut self) {
        let exchange = *self.exchanges.choose(&mut self.rng).expect("exchange");
        let n = self.rng.gen_range(5..=30);
        let mut used = HashSet::new();
        let mut payees = Vec::with_capacity(n + 1);
        while payees.len() < n {
            let raw = self.rng.gen_range(100_000..=50_000_000);
            let v = self.styled(raw);
            if used.insert(v) {
                let to = self.random_user();
                payees.push((to, v));
            }
        }
        let fee = 2_000 + 100 * n as u64;
        let need = payees.iter().map(|p| p.1).sum::<u64>() + fee + 10_000;
        let mut inputs = Vec::new();
        let mut have = 0;
        while have < need {
            let w = &mut self.wallets[exchange as usize];
            match Self::take_random(&mut self.rng, w) {
                Some(c) => {
                    have += c.value;
                    inputs.push(c);
                }
                None => {
                    let c = self.mint(&[(exchange, need - have + 10 * BTC)]).remove(0);
                    have += c.value;
                    inputs.push(c);
                }
            }
        }
        payees.push((exchange, have - need + 10_000));
        let (_, coins) = self.emit(&inputs, &payees, SynthLabel::Background);
        self.deposit_all(coins);
    }

    fn exit(&mut self) -> bool {
        let mut sources: Vec<Option<PoolKind>> = Vec::new();
        if !self.wasabi_mixed.is_empty() {
            sources.push(None);
            sources.push(None);
        }
        let change_ok = !self.wasabi_change.is_empty();
        for (&pool, coins) in &self.postmix {
            if coins.len() > POSTMIX_RESERVE {
                sources.push(Some(pool));
            }
        }
        let from_change = change_ok && (sources.is_empty() || self.rng.gen_bool(0.25));
        let coin = if from_change {
            Self::take_random(&mut self.rng, &mut self.wasabi_change)
        } else {
            match sources.choose(&mut self.rng).copied() {
                None => return false,
                Some(None) => Self::take_random(&mut self.rng, &mut self.wasabi_mixed),
                Some(Some(pool)) => {
                    let coins = self.postmix.get_mut(&pool).expect("listed");
                    Self::take_random(&mut self.rng, coins)
                }
            }
        };
        let c = coin.expect("source was nonempty");
        let fee = self.rng.gen_range(300..=2_000).min(c.value / 4);
        let to = self.random_other_user(c.owner);
        let outs = if c.value < 60_000 || self.rng.gen_bool(0.5) {
            vec![(to, c.value - fee)]
        } else {
            let raw = self.rng.gen_range(c.value / 2..=c.value - fee - 20_000);
            let pay = self.styled(raw);
            vec![(to, pay), (c.owner, c.value - fee - pay)]
        };
        let (_, coins) = self.emit(&[c], &outs, SynthLabel::Background);
        self.deposit_all(coins);
        true
    }
}
