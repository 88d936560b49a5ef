from msvm_cmd import cli
