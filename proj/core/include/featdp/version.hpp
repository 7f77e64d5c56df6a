#pragma once

#define FEATDP_VERSION "0.1.0"
