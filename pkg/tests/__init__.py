# dispflow 测试包
