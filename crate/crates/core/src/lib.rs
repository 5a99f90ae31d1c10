pub mod corpus;
pub mod fitting;
pub mod ledger;
pub mod metrics;
pub mod ontology;
pub mod oracle;
pub mod scenario;
pub mod simplex;
