use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use vanet_gka::codec::*;
use vanet_gka::crypto::{Group, Signature};
use vanet_gka::params::Profile;
use vanet_gka::ta::{Beacon, Location, Pseudonym};

const TAGS: [u8; 17] = [
    0x01, 0x02, 0x10, 0x11, 0x12, 0x13, 0x14, 0x20, 0x21, 0x22, 0x23, 0x24, 0x30, 0x31, 0x32, 0x33, 0x34,
];

fn bytes(rng: &mut ChaCha20Rng, max: usize) -> Vec<u8> {
    let mut v = vec![0u8; rng.gen_range(0..=max)];
    rng.fill_bytes(&mut v);
    v
}

fn fid(rng: &mut ChaCha20Rng) -> Pseudonym {
    let mut f = [0u8; 42];
    rng.fill_bytes(&mut f);
    Pseudonym(f)
}

fn mac(rng: &mut ChaCha20Rng) -> [u8; 16] {
    let mut m = [0u8; 16];
    rng.fill_bytes(&mut m);
    m
}

fn sig(g: &Group, rng: &mut ChaCha20Rng) -> Signature {
    Signature {
        challenge: g.random_scalar(rng),
        response: g.random_scalar(rng),
    }
}

fn random_message(g: &Group, tag: u8, rng: &mut ChaCha20Rng) -> WireMessage {
    let sealed = |rng: &mut ChaCha20Rng| SealedMsg { sealed: bytes(rng, 300), mac: mac(rng) };
    let fs = |rng: &mut ChaCha20Rng| FidSealedMsg { fid: fid(rng), sealed: bytes(rng, 300), mac: mac(rng) };
    let es = |rng: &mut ChaCha20Rng| EpochSealedMsg { epoch: rng.gen(), sealed: bytes(rng, 300), mac: mac(rng) };
    match tag {
        0x01 => WireMessage::GkaRound1(Round1Msg {
            tid: bytes(rng, 41),
            x: g.random_elem(rng),
            r: g.random_elem(rng),
            t: g.random_elem(rng),
            sig: sig(g, rng),
        }),
        0x02 => {
            let n = rng.gen_range(0..8);
            WireMessage::GkaRound2(Round2Msg {
                tid: bytes(rng, 41),
                y: g.random_elem(rng),
                s: g.random_scalar(rng),
                tokens: (0..n).map(|_| g.random_elem(rng)).collect(),
                sig: sig(g, rng),
            })
        }
        0x10 => WireMessage::Beacon(Beacon {
            pk_rsu: g.random_elem(rng),
            loc: Location { x_mm: rng.gen(), y_mm: rng.gen() },
            loc_hash: g.random_scalar(rng),
            ta_sig: sig(g, rng),
        }),
        0x11 => {
            let mut fast = [0u8; 42];
            rng.fill_bytes(&mut fast);
            WireMessage::Hello(HelloMsg {
                pk_v: g.random_elem(rng),
                ts_ms: rng.gen(),
                fast_fid: fast,
                kem_u: g.random_elem(rng),
                sealed: bytes(rng, 120),
                mac: mac(rng),
            })
        }
        0x12 => WireMessage::Challenge(sealed(rng)),
        0x13 => WireMessage::Confirm(fs(rng)),
        0x14 => WireMessage::AuthAccept(fs(rng)),
        0x20 => WireMessage::Pag1(fs(rng)),
        0x21 => WireMessage::Pag2(fs(rng)),
        0x22 => WireMessage::Pag3(es(rng)),
        0x23 => WireMessage::Bm1(es(rng)),
        0x24 => WireMessage::GkTransfer(GkTransferMsg {
            source: bytes(rng, 41),
            epoch: rng.gen(),
            sealed: bytes(rng, 120),
            mac: mac(rng),
        }),
        0x30 => WireMessage::Broadcast(sealed(rng)),
        0x31 => WireMessage::ToRsu(fs(rng)),
        0x32 => WireMessage::Word1(sealed(rng)),
        0x33 => WireMessage::Word2(es(rng)),
        0x34 => WireMessage::Word3(sealed(rng)),
        _ => unreachable!(),
    }
}

fn profile_group(i: u8) -> Group {
    [Profile::Test, Profile::Desk64, Profile::Default256][i as usize % 3].group().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn decode_inverts_encode(tag_idx in 0usize..TAGS.len(), seed in any::<u64>(), prof in 0u8..3) {
        let g = profile_group(prof);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let msg = random_message(&g, TAGS[tag_idx], &mut rng);
        let bytes = msg.encode(&g);
        prop_assert_eq!(bytes[0], TAGS[tag_idx]);
        let back = WireMessage::decode(&g, &bytes).unwrap();
        prop_assert_eq!(&back, &msg);
        prop_assert_eq!(back.encode(&g), bytes);
    }

    #[test]
    fn decode_never_panics(data in proptest::collection::vec(any::<u8>(), 0..200), prof in 0u8..3) {
        let g = profile_group(prof);
        if let Ok(m) = WireMessage::decode(&g, &data) {
            prop_assert_eq!(m.encode(&g), data);
        }
    }

    #[test]
    fn truncation_is_rejected(tag_idx in 0usize..TAGS.len(), seed in any::<u64>(), cut in 1usize..64) {
        let g = profile_group(1);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let bytes = random_message(&g, TAGS[tag_idx], &mut rng).encode(&g);
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(WireMessage::decode(&g, &bytes[..keep]).is_err());
    }
}

#[test]
fn field_widths_are_fixed() {
    let g = Profile::Desk64.group().unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(41);
    for tag in TAGS {
        let msg = random_message(&g, tag, &mut rng);
        let bytes = msg.encode(&g);
        if let Some(m) = msg.mac() {
            assert_eq!(m.len(), 16);
            assert_eq!(&bytes[bytes.len() - 16..], m);
        }
        match &msg {
            WireMessage::Confirm(m)
            | WireMessage::AuthAccept(m)
            | WireMessage::Pag1(m)
            | WireMessage::Pag2(m)
            | WireMessage::ToRsu(m) => assert_eq!(&bytes[1..43], &m.fid.0),
            _ => {}
        }
    }
}

#[test]
fn obu_to_rsu_overhead_is_58() {
    let g = Profile::Desk64.group().unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(42);
    let mut obu = 0;
    for tag in TAGS {
        let msg = random_message(&g, tag, &mut rng);
        if msg.is_obu_to_rsu() {
            obu += 1;
            assert_eq!(msg.measure_overhead(), 58, "{}", msg.name());
        }
    }
    assert_eq!(obu, 6);
}
