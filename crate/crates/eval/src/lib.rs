//! Hosts the `acceptance` test target.
