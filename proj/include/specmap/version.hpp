#pragma once

#define SPECMAP_VERSION "0.1.0"
