#![allow(dead_code)]

pub mod lme_instances;
pub mod oracle;
