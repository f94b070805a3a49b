//! Credential digests and authenticated sessions.
//!
//! The digest is a salted SHA-256 stub, `sha256("<username>:<password>")`
//! in lowercase hex. It is not meant to resist offline attacks.

use sha2::{Digest, Sha256};

use super::model::Role;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub user_id: String,
    pub role: Role,
}

pub fn password_digest(username: &str, password: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(username.as_bytes());
    hasher.update(b":");
    hasher.update(password.as_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_salted_by_username() {
        let a = password_digest("st01", "st01-secret");
        let b = password_digest("st02", "st01-secret");
        assert_ne!(a, b);
        assert_eq!(a.len(), 64);
        assert_eq!(a, password_digest("st01", "st01-secret"));
    }
}
