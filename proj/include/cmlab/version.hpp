#pragma once

#define CMLAB_VERSION "0.1.0"
