#pragma once

#include "bacflow/appdata_scoring.hpp"
#include "bacflow/baseline.hpp"
#include "bacflow/commands.hpp"
#include "bacflow/config.hpp"
#include "bacflow/cov.hpp"
#include "bacflow/errors.hpp"
#include "bacflow/flow_engine.hpp"
#include "bacflow/flow_map.hpp"
#include "bacflow/frame_builder.hpp"
#include "bacflow/graph_export.hpp"
#include "bacflow/packet_codec.hpp"
#include "bacflow/pcap.hpp"
#include "bacflow/service.hpp"
#include "bacflow/timestamp.hpp"
