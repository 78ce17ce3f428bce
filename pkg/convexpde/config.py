convexpde_VERSION = "1.0.0"
REPORT_SCHEMA = "convexpde-report/1"
