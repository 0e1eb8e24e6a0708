pub mod association;
pub mod channel;
pub mod config;
pub mod deployment;
pub mod error;
pub mod harness;
pub mod estimation;
pub mod linalg;
pub mod power_control;
pub mod spectral_efficiency;

#[cfg(test)]
mod test_support;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channels.md")]
    mod channels {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/power_control.md")]
    mod power_control {}
    #[doc = include_str!("../../../book/src/campaigns.md")]
    mod campaigns {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
