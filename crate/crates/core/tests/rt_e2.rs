use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use proptest::prelude::*;

use ricworld::rt_e2::mailbox::conflated;
use ricworld::rt_e2::wire::{decode, encode_frame, Frame, WireError};
use ricworld::rt_e2::{
    connect_ric, in_process_link, AppStateMsg, Cqi, LinkError, PolicyMsg, RanEndpoint, ReportMsg,
    RicEndpoint, SeqPacketListener, SyncAction, SyncState, UeReport,
};

fn report(t: u64, n: u32) -> ReportMsg {
    let ues = (1..=n)
        .map(|r| UeReport {
            rnti: r,
            cqi: Cqi::saturating((r % 15 + 1) as i64),
            backlog_bytes: 1000 * r as u64 + t,
            tx_bytes_last_tti: t,
        })
        .collect();
    ReportMsg::new(t, ues).unwrap()
}

fn policy(t: u64) -> PolicyMsg {
    PolicyMsg::new(t, BTreeMap::from([(1, 0.25), (2, 0.75)])).unwrap()
}

fn ue_strategy() -> impl Strategy<Value = UeReport> {
    (any::<u32>(), 1u8..=15, any::<u64>(), any::<u64>()).prop_map(|(rnti, c, b, tx)| UeReport {
        rnti,
        cqi: Cqi::new(c).unwrap(),
        backlog_bytes: b,
        tx_bytes_last_tti: tx,
    })
}

proptest! {
    #[test]
    fn report_roundtrip(t in any::<u64>(), ues in prop::collection::vec(ue_strategy(), 0..40)) {
        let mut ues = ues;
        ues.sort_by_key(|u| u.rnti);
        ues.dedup_by_key(|u| u.rnti);
        let msg = ReportMsg::new(t, ues).unwrap();
        let bytes = encode_frame(&Frame::Report(msg.clone()));
        prop_assert_eq!(decode(&bytes).unwrap(), Frame::Report(msg));
    }

    #[test]
    fn policy_roundtrip_is_bit_exact(
        t in any::<u64>(),
        w in prop::collection::btree_map(any::<u32>(), 1e-300f64..1e300, 1..30),
    ) {
        let msg = PolicyMsg::new(t, w).unwrap();
        let Frame::Policy(back) = decode(&encode_frame(&Frame::Policy(msg.clone()))).unwrap() else {
            panic!("kind changed");
        };
        for ((r1, a), (r2, b)) in msg.weights().iter().zip(back.weights()) {
            prop_assert_eq!(r1, r2);
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        prop_assert_eq!(back.ric_time(), t);
    }

    #[test]
    fn every_truncation_is_rejected(n in 0u32..8, cut in 0usize..200) {
        let bytes = encode_frame(&Frame::Report(report(5, n)));
        let cut = cut % bytes.len();
        let truncated = matches!(decode(&bytes[..cut]), Err(WireError::Truncated { .. }));
        prop_assert!(truncated);
    }

    #[test]
    fn conflation_keeps_newest(seq in prop::collection::vec(any::<u32>(), 1..50)) {
        let (tx, rx) = conflated();
        for v in &seq {
            tx.publish(*v).unwrap();
        }
        prop_assert_eq!(rx.try_recv().unwrap().map(|r| r.msg), seq.last().copied());
        prop_assert_eq!(rx.try_recv().unwrap(), None);
        prop_assert_eq!(rx.conflated_count(), seq.len() as u64 - 1);
    }
}

#[test]
fn trailing_bytes_and_bad_headers() {
    let mut bytes = encode_frame(&Frame::Close);
    bytes.push(0);
    assert_eq!(decode(&bytes), Err(WireError::TrailingBytes(1)));
    assert_eq!(decode(&[2, 0, 1]), Err(WireError::BadVersion(2)));
    assert_eq!(decode(&[1, 0, 9]), Err(WireError::UnknownKind(9)));
    let mut r = encode_frame(&Frame::Report(report(0, 1)));
    // first UE's cqi byte sits after header, ran_time, count and rnti
    r[3 + 8 + 4 + 4] = 16;
    assert!(matches!(decode(&r), Err(WireError::BadCqi { cqi: 16, .. })));
}

#[test]
fn invalid_messages_rejected_at_construction() {
    assert!(PolicyMsg::new(0, BTreeMap::from([(1, -1.0)])).is_err());
    assert!(PolicyMsg::new(0, BTreeMap::from([(1, f64::NAN)])).is_err());
    assert!(PolicyMsg::new(0, BTreeMap::from([(1, 0.0), (2, 0.0)])).is_err());
    assert!(AppStateMsg::new(1, 0, -0.5).is_err());
    let dup = vec![
        UeReport {
            rnti: 3,
            cqi: Cqi::saturating(4),
            backlog_bytes: 0,
            tx_bytes_last_tti: 0,
        };
        2
    ];
    assert!(ReportMsg::new(0, dup).is_err());
}

#[test]
fn sync_fast_forward_example() {
    let mut s = SyncState::new();
    for _ in 0..3 {
        s.complete();
    }
    assert_eq!(s.step(9), SyncAction::FastForwardRic);
    assert_eq!(s.ric_time, 9);
    assert_eq!(s.skipped_ttis, 6);
    assert_eq!(s.step(4), SyncAction::PauseRic);
    assert_eq!(s.step(9), SyncAction::Proceed);
}

#[test]
fn in_process_publish_never_blocks() {
    let (mut ran, mut ric) = in_process_link();
    let start = Instant::now();
    for t in 0..10_000 {
        ran.publish_report(report(t, 4)).unwrap();
    }
    assert!(start.elapsed() < Duration::from_secs(1));
    assert_eq!(ric.recv_report().unwrap().ran_time(), 9_999);
    assert!(ric.try_recv_report().unwrap().is_none());
}

fn socket_pair() -> (
    tempfile::TempDir,
    SeqPacketListener,
    ricworld::rt_e2::SocketRan,
    ricworld::rt_e2::SocketRic,
) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e2.sock");
    let listener = SeqPacketListener::bind(&path).unwrap();
    let p2 = path.clone();
    let ric = std::thread::spawn(move || connect_ric(&p2, Duration::from_secs(5)).unwrap());
    let ran = listener.accept_ran(Duration::from_secs(5)).unwrap();
    (dir, listener, ran, ric.join().unwrap())
}

#[test]
fn socket_report_policy_exchange() {
    let (_dir, _l, mut ran, mut ric) = socket_pair();
    ran.publish_report(report(7, 100)).unwrap();
    let got = ric.recv_report().unwrap();
    assert_eq!(got, report(7, 100));
    ric.publish_policy(policy(7)).unwrap();
    ran.wait_until(Instant::now() + Duration::from_millis(50))
        .unwrap();
    let p = ran.poll_policy().unwrap().expect("policy arrived");
    assert_eq!(p.msg, policy(7));
    assert!(ran.poll_policy().unwrap().is_none());
}

#[test]
fn socket_conflates_to_newest() {
    let (_dir, _l, mut ran, mut ric) = socket_pair();
    for t in 0..20 {
        ran.publish_report(report(t, 2)).unwrap();
    }
    std::thread::sleep(Duration::from_millis(20));
    assert_eq!(ric.recv_report().unwrap().ran_time(), 19);
    for t in 0..5 {
        ric.publish_policy(policy(t)).unwrap();
    }
    std::thread::sleep(Duration::from_millis(20));
    assert_eq!(ran.poll_policy().unwrap().unwrap().msg.ric_time(), 4);
}

#[test]
fn socket_app_states_newest_per_ue() {
    let (_dir, _l, mut ran, mut ric) = socket_pair();
    for (rnti, t, mb) in [(1, 0, 1.0), (2, 0, 2.0), (1, 40, 3.0)] {
        ran.publish_app_state(AppStateMsg::new(rnti, t, mb).unwrap())
            .unwrap();
    }
    ran.publish_report(report(40, 2)).unwrap();
    ric.recv_report().unwrap();
    let mut out = Vec::new();
    ric.poll_app_states(&mut out).unwrap();
    out.sort_by_key(|a| a.rnti);
    assert_eq!(out.len(), 2);
    assert_eq!(out[0].media_buffer_s, 3.0);
    assert_eq!(out[1].media_buffer_s, 2.0);
}

#[test]
fn socket_close_is_seen_by_both_sides() {
    let (_dir, _l, mut ran, mut ric) = socket_pair();
    ran.close();
    assert!(matches!(ric.recv_report(), Err(LinkError::Closed)));

    let (_dir, _l, mut ran, ric) = socket_pair();
    drop(ric);
    std::thread::sleep(Duration::from_millis(10));
    let mut closed = false;
    for t in 0..10 {
        match ran.publish_report(report(t, 1)) {
            Err(LinkError::Closed) => {
                closed = true;
                break;
            }
            Ok(()) => {}
            Err(e) => panic!("unexpected {e}"),
        }
        if matches!(ran.poll_policy(), Err(LinkError::Closed)) {
            closed = true;
            break;
        }
    }
    assert!(closed);
}

#[test]
fn listener_replaces_stale_socket_but_not_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.sock");
    let first = SeqPacketListener::bind(&path).unwrap();
    std::mem::forget(first);
    assert!(SeqPacketListener::bind(&path).is_ok());

    let file = dir.path().join("plain");
    std::fs::write(&file, b"x").unwrap();
    assert!(SeqPacketListener::bind(&file).is_err());
    assert_eq!(std::fs::read(&file).unwrap(), b"x");
}

#[test]
fn connect_times_out_without_listener() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    assert!(connect_ric(&dir.path().join("none"), Duration::from_millis(50)).is_err());
    assert!(start.elapsed() < Duration::from_secs(2));
}
