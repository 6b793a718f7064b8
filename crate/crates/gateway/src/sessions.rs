use std::collections::HashMap;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub const DEFAULT_TTL_SECS: i64 = 24 * 3600;

pub fn now_secs() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    /// 128-bit token as 32 lowercase hex digits.
    pub token: String,
    pub user_id: String,
    pub expiry_ts: i64,
}

/// Live sessions. Kept in memory only: a restart invalidates every token.
#[derive(Debug)]
pub struct Sessions {
    ttl_secs: i64,
    map: Mutex<HashMap<String, Session>>,
}

impl Sessions {
    pub fn new(ttl_secs: i64) -> Self {
        Self {
            ttl_secs,
            map: Mutex::new(HashMap::new()),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Session>> {
        self.map.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn create(&self, user_id: &str) -> Session {
        let s = Session {
            token: format!("{:032x}", rand::random::<u128>()),
            user_id: user_id.to_string(),
            expiry_ts: now_secs() + self.ttl_secs,
        };
        self.lock().insert(s.token.clone(), s.clone());
        s
    }

    /// The session for `token` if it exists and has not expired. Expired
    /// sessions are dropped.
    pub fn resolve(&self, token: &str) -> Option<Session> {
        let mut map = self.lock();
        match map.get(token) {
            Some(s) if s.expiry_ts > now_secs() => Some(s.clone()),
            Some(_) => {
                map.remove(token);
                None
            }
            None => None,
        }
    }

    /// Forces a session's expiry, for tests of token expiry.
    pub fn set_expiry(&self, token: &str, expiry_ts: i64) {
        if let Some(s) = self.lock().get_mut(token) {
            s.expiry_ts = expiry_ts;
        }
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_are_128_bit_hex_and_distinct() {
        let s = Sessions::new(60);
        let a = s.create("1");
        let b = s.create("1");
        assert_eq!(a.token.len(), 32);
        assert!(a.token.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
        assert_ne!(a.token, b.token);
        assert_eq!(s.resolve(&a.token).unwrap().user_id, "1");
    }

    #[test]
    fn expired_tokens_are_rejected_and_dropped() {
        let s = Sessions::new(60);
        let a = s.create("2");
        s.set_expiry(&a.token, now_secs() - 1);
        assert!(s.resolve(&a.token).is_none());
        assert!(s.is_empty());
        assert!(s.resolve("deadbeef").is_none());
    }
}
