#ifndef SECTX_PROTOCOLS_INTERNAL_HPP_
#define SECTX_PROTOCOLS_INTERNAL_HPP_

#include "sectx/netsim.hpp"

namespace sectx::protocols {

/// Admission checks and protocol-global setup; throws ProtocolRefusal.
void init_world(netsim::World& w);
void on_start(netsim::World& w, netsim::TxnRuntime& t);
void on_receive(netsim::World& w, netsim::Message& m);
void on_action(netsim::World& w, const netsim::LocationId& loc,
               const netsim::Action& a);

}  // namespace sectx::protocols

#endif  // SECTX_PROTOCOLS_INTERNAL_HPP_
