use proptest::prelude::*;
use siat_core::broker::{Broker, BrokerError, ServiceTopics};

#[test]
fn service_topic_lifecycle_leaves_no_residue() {
    let b = Broker::in_memory();
    for i in 0..1000 {
        let id = i.to_string();
        let names = b.provision_service_topics(&id).unwrap();
        assert_eq!(names, ServiceTopics::for_service(&id).into_vec());
        assert_eq!(b.list_topics().len(), 3);
        assert_eq!(b.delete_service_topics(&id).unwrap(), 3);
    }
    assert!(b.list_topics().is_empty());
}

#[test]
fn journaled_topics_survive_reopen() {
    let dir = tempfile::tempdir().unwrap();
    {
        let b = Broker::open(dir.path()).unwrap();
        b.create_topic("t").unwrap();
        for i in 0..5u8 {
            b.publish("t", Some("k"), &[i]).unwrap();
        }
        b.poll("g", "t", 3).unwrap();
        b.commit("g", "t", 2).unwrap();
    }
    let b = Broker::open(dir.path()).unwrap();
    assert_eq!(b.group_state("g", "t").unwrap().committed_offset, 2);
    let rest = b.poll("g", "t", 10).unwrap();
    assert_eq!(rest.iter().map(|m| m.payload[0]).collect::<Vec<_>>(), vec![3, 4]);
}

#[test]
fn deleted_topic_handles_fail() {
    let b = Broker::in_memory();
    let h = b.create_topic("gone").unwrap();
    b.delete_topic("gone").unwrap();
    assert!(matches!(h.len(), Err(BrokerError::UnknownTopic(_))));
    assert!(matches!(b.publish("gone", None, b"x"), Err(BrokerError::UnknownTopic(_))));
}

proptest! {
    #[test]
    fn commits_never_decrease(n in 1usize..30, commits in proptest::collection::vec(-1i64..30, 1..40)) {
        let b = Broker::in_memory();
        b.create_topic("t").unwrap();
        for i in 0..n {
            b.publish("t", None, &[i as u8]).unwrap();
        }
        let mut high = -1;
        for c in commits {
            match b.commit("g", "t", c) {
                Ok(v) => {
                    prop_assert!(c < n as i64);
                    high = high.max(c);
                    prop_assert_eq!(v, high);
                }
                Err(_) => prop_assert!(c >= n as i64),
            }
            prop_assert_eq!(b.group_state("g", "t").unwrap().committed_offset, high);
        }
    }

    #[test]
    fn poll_reads_each_message_once_in_order(n in 0usize..50, step in 1usize..8) {
        let b = Broker::in_memory();
        b.create_topic("t").unwrap();
        for i in 0..n {
            b.publish("t", None, &(i as u32).to_be_bytes()).unwrap();
        }
        let mut seen = Vec::new();
        loop {
            let got = b.poll("g", "t", step).unwrap();
            if got.is_empty() {
                break;
            }
            seen.extend(got.into_iter().map(|m| m.offset));
        }
        prop_assert_eq!(seen, (0..n as u64).collect::<Vec<_>>());
    }
}
