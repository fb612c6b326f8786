//! The central authority: owns the config, applies membership churn, and
//! moves the epoch forward whenever departed members must be locked out.

use crate::config::{Config, ConfigError};
use crate::hierarchy::{ClassId, MembershipEvent, RekeyEntry, RekeyLog, UserId};
use crate::poly_keys::{ClassKey, KeyError, UserKey};

#[derive(Debug, Clone)]
pub struct Authority {
    config: Config,
    log: RekeyLog,
}

impl Authority {
    pub fn new(config: Config) -> Self {
        Self { config, log: RekeyLog::default() }
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn log(&self) -> &RekeyLog {
        &self.log
    }

    pub fn epoch(&self) -> u64 {
        self.config.scheme.epoch()
    }

    pub fn class_key(&self, class: ClassId) -> Result<ClassKey, KeyError> {
        self.config.scheme.compute_class_key(&self.config.hierarchy, class)
    }

    pub fn derive(&self, ancestor: ClassId, descendant: ClassId) -> Result<ClassKey, KeyError> {
        self.config.scheme.derive_descendant_key(&self.config.hierarchy, ancestor, descendant)
    }

    pub fn user_key(&self, user: UserId) -> Result<UserKey, KeyError> {
        let class = self.config.hierarchy.class_of_user(user)?;
        self.class_key(class)?.user_key(user)
    }

    /// Applies one batch. On error nothing changes and nothing is logged.
    pub fn apply_batch(&mut self, events: &[MembershipEvent]) -> Result<RekeyEntry, ConfigError> {
        let mut next = self.config.clone();
        let outcome = next.hierarchy.apply_batch(events)?;
        if outcome.bumps_epoch() {
            let epoch = next.scheme.epoch() + 1;
            next.scheme.set_epoch(epoch);
        }
        next.sync_scheme()?;
        self.config = next;
        Ok(self.log.record(self.epoch(), outcome))
    }
}
