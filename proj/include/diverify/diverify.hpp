#pragma once

#include "diverify/attack.hpp"
#include "diverify/attestation.hpp"
#include "diverify/bench.hpp"
#include "diverify/bytes.hpp"
#include "diverify/ca.hpp"
#include "diverify/canonical.hpp"
#include "diverify/config.hpp"
#include "diverify/crypto.hpp"
#include "diverify/daemon.hpp"
#include "diverify/policy.hpp"
#include "diverify/policy_meta.hpp"
#include "diverify/proof.hpp"
#include "diverify/providers.hpp"
#include "diverify/registry.hpp"
#include "diverify/stack.hpp"
#include "diverify/verifier.hpp"
