use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use vanet_gka::auth::channel_keys;
use vanet_gka::codec::WireMessage;
use vanet_gka::crypto::{sym_decrypt, ChannelKeys, GElem, Group};
use vanet_gka::group_key::{gk_keys, GroupKeyError, GroupState, MemberState};
use vanet_gka::params::Profile;
use vanet_gka::ta::Pseudonym;

struct Harness {
    g: Group,
    rsu: GroupState,
    members: BTreeMap<Pseudonym, MemberState>,
    next: u32,
    /// Every group-key ciphertext seen so far, with its epoch.
    history: Vec<(u64, WireMessage)>,
}

impl Harness {
    fn new(profile: Profile) -> Self {
        Harness {
            g: profile.group().unwrap(),
            rsu: GroupState::new(),
            members: BTreeMap::new(),
            next: 0,
            history: Vec::new(),
        }
    }

    fn fresh_fid(&mut self) -> Pseudonym {
        self.next += 1;
        let mut f = [0u8; 42];
        f[..4].copy_from_slice(&self.next.to_be_bytes());
        Pseudonym(f)
    }

    fn join(&mut self, rng: &mut ChaCha20Rng) -> Pseudonym {
        let fid = self.fresh_fid();
        let keys: ChannelKeys = channel_keys(&self.g, &self.g.random_nonzero_scalar(rng));
        let mut m = MemberState::with_lambda(fid, keys.clone(), self.g.random_nonzero_scalar(rng));
        let WireMessage::Pag1(p1) = m.offer(&self.g, rng) else { unreachable!() };
        let out = self.rsu.handle_join(&self.g, &p1, &keys, rng).unwrap();
        let WireMessage::Pag2(p2) = out.pag2_for(&fid).unwrap() else { unreachable!() };
        m.apply_pag2(&self.g, p2).unwrap();
        let WireMessage::Pag3(p3) = &out.pag3 else { unreachable!() };
        m.check_pag3(&self.g, p3).unwrap();
        for other in self.members.values_mut() {
            other.apply_pag3(&self.g, p3).unwrap();
        }
        self.history.push((out.epoch, out.pag3.clone()));
        self.members.insert(fid, m);
        fid
    }

    fn leave(&mut self, fid: &Pseudonym, rng: &mut ChaCha20Rng) -> MemberState {
        let mut gone = self.members.remove(fid).unwrap();
        let out = self.rsu.handle_leave(&self.g, fid, rng).unwrap();
        if let Some(WireMessage::Bm1(b)) = &out.bm1 {
            for m in self.members.values_mut() {
                m.apply_bm1(&self.g, b).unwrap();
            }
            assert_eq!(gone.apply_bm1(&self.g, b), Err(GroupKeyError::FidAbsent));
            self.history.push((out.epoch, out.bm1.clone().unwrap()));
        }
        gone
    }

    fn assert_agreement(&self) {
        for m in self.members.values() {
            assert_eq!(m.gk(), self.rsu.gk());
            assert_eq!(m.epoch(), self.rsu.epoch());
        }
    }
}

#[test]
fn random_membership_sequences_agree() {
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    for _ in 0..100 {
        let mut h = Harness::new(Profile::Desk64);
        for _ in 0..24 {
            if h.members.is_empty() || rng.gen_bool(0.55) {
                h.join(&mut rng);
            } else {
                let k = rng.gen_range(0..h.members.len());
                let fid = *h.members.keys().nth(k).unwrap();
                h.leave(&fid, &mut rng);
            }
            h.assert_agreement();
        }
    }
}

#[test]
fn leaver_hits_new_key_only_by_accident() {
    // Leaver L and remaining member i; L applies its own λ to every share in Bm1.
    let g = Profile::Test.group().unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(32);
    let (mut hits, mut total) = (0u32, 0u32);
    for l_leaver in 1..11u64 {
        for l_i in 1..11u64 {
            for gamma in 1..11u64 {
                let mut rsu = GroupState::new();
                let ka = channel_keys(&g, &g.scalar_u64(1));
                let kb = channel_keys(&g, &g.scalar_u64(2));
                let mut leaver = MemberState::with_lambda(Pseudonym([1; 42]), ka.clone(), g.scalar_u64(l_leaver));
                let stay = MemberState::with_lambda(Pseudonym([2; 42]), kb.clone(), g.scalar_u64(l_i));
                for (m, k) in [(&leaver, &ka), (&stay, &kb)] {
                    let WireMessage::Pag1(p1) = m.offer(&g, &mut rng) else { unreachable!() };
                    rsu.handle_join(&g, &p1, k, &mut rng).unwrap();
                }
                let out = rsu.rekey(&g, &mut rng).unwrap();
                let WireMessage::Pag2(p2) = out.pag2_for(leaver.fid()).unwrap() else { unreachable!() };
                let old = leaver.apply_pag2(&g, p2).unwrap();
                let leave = rsu
                    .handle_leave_with_gamma(&g, leaver.fid(), g.scalar_u64(gamma), &mut rng)
                    .unwrap();
                let Some(WireMessage::Bm1(bm1)) = &leave.bm1 else { unreachable!() };
                let plain = sym_decrypt(&gk_keys(&g, &old).enc, &bm1.sealed).unwrap();
                let (_, pairs, product) = vanet_gka::group_key::parse_bm1(&g, &plain).unwrap();
                let target = g.g_pow(&g.scalar_u64(gamma));
                let inv = g.scalar_inv(leaver.lambda()).unwrap();
                let new_gk = leave.gk.unwrap();
                for (share, _) in &pairs {
                    total += 1;
                    let candidate: GElem = g.exp(share, &inv);
                    if candidate == target {
                        hits += 1;
                        assert_eq!(l_i, l_leaver);
                        assert_eq!(g.mul(&candidate, &product), new_gk);
                    }
                }
            }
        }
    }
    assert_eq!(total, 1000);
    assert_eq!(hits, 100);
}

#[test]
fn joiner_cannot_open_earlier_epochs() {
    let mut rng = ChaCha20Rng::seed_from_u64(33);
    for _ in 0..100 {
        let mut h = Harness::new(Profile::Desk64);
        for _ in 0..rng.gen_range(2..6) {
            h.join(&mut rng);
        }
        let victim = *h.members.keys().next().unwrap();
        h.leave(&victim, &mut rng);
        let before = h.history.len();
        let joiner = h.join(&mut rng);
        let join_epoch = h.rsu.epoch();
        let m = &h.members[&joiner];
        let gk = m.gk().unwrap().clone();
        let keys = gk_keys(&h.g, &gk);
        for (epoch, msg) in &h.history[..before] {
            assert!(*epoch < join_epoch);
            assert!(!msg.verify_mac(&h.g, &keys.mac));
            let mut probe = m.clone();
            match msg {
                WireMessage::Pag3(p) => assert!(probe.apply_pag3(&h.g, p).is_err()),
                WireMessage::Bm1(b) => assert!(probe.apply_bm1(&h.g, b).is_err()),
                _ => unreachable!(),
            }
        }
    }
}

#[test]
fn share_commutation() {
    let g = Profile::Test.group().unwrap();
    for l in 0..11 {
        for gm in 0..11 {
            let (l, gm) = (g.scalar_u64(l), g.scalar_u64(gm));
            assert_eq!(g.exp(&g.g_pow(&l), &gm), g.exp(&g.g_pow(&gm), &l));
        }
    }
}

#[test]
fn consecutive_epochs_use_fresh_gamma() {
    let mut rng = ChaCha20Rng::seed_from_u64(34);
    let mut h = Harness::new(Profile::Desk64);
    h.join(&mut rng);
    let mut seen = std::collections::HashSet::new();
    for _ in 0..50 {
        let out = h.rsu.rekey(&h.g, &mut rng).unwrap();
        assert!(seen.insert(out.gk.value().clone()));
    }
}
